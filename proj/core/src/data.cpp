#include "lfm/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "json.hpp"

#include "internal_util.hpp"
#include "lfm/errors.hpp"

namespace lfm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

std::string_view to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::Categorical: return "categorical";
        case FeatureKind::Numeric: return "numeric";
        case FeatureKind::Text: return "text";
    }
    return "categorical";
}

FeatureKind feature_kind_from_string(std::string_view s) {
    if (s == "categorical") return FeatureKind::Categorical;
    if (s == "numeric") return FeatureKind::Numeric;
    if (s == "text") return FeatureKind::Text;
    throw DataError("unknown feature kind: " + std::string(s));
}

const FeatureSpec* FeatureSchema::find(std::string_view name) const {
    for (const auto& f : features)
        if (f.name == name) return &f;
    return nullptr;
}

int FeatureSchema::label_index(std::string_view label) const {
    for (std::size_t i = 0; i < label_domain.size(); ++i)
        if (label_domain[i] == label) return static_cast<int>(i);
    return -1;
}

namespace {

void require_unique(const std::vector<std::string>& items, const std::string& what) {
    std::set<std::string> seen;
    for (const auto& s : items)
        if (!seen.insert(s).second)
            throw DataError("duplicate " + what + ": " + s);
}

} // namespace

void FeatureSchema::validate() const {
    std::vector<std::string> names;
    names.reserve(features.size());
    for (const auto& f : features) {
        if (f.name.empty()) throw DataError("feature with empty name");
        names.push_back(f.name);
        if (f.kind == FeatureKind::Categorical) {
            if (f.domain.empty())
                throw DataError("categorical feature has empty domain: " + f.name);
            require_unique(f.domain, "domain value of feature " + f.name);
        } else if (f.kind == FeatureKind::Numeric) {
            if (!(f.min < f.max))
                throw DataError("numeric feature needs min < max: " + f.name);
        }
    }
    require_unique(names, "feature name");
    if (label_field.empty()) throw DataError("empty label_field");
    for (const auto& n : names)
        if (n == label_field)
            throw DataError("label_field collides with feature name: " + label_field);
    if (label_domain.empty()) throw DataError("empty label_domain");
    require_unique(label_domain, "label");
}

FeatureSchema schema_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("schema is not valid JSON: ") + e.what());
    }
    FeatureSchema s;
    try {
        for (const auto& jf : j.at("features")) {
            FeatureSpec f;
            f.name = jf.at("name").get<std::string>();
            f.kind = feature_kind_from_string(jf.at("kind").get<std::string>());
            if (f.kind == FeatureKind::Categorical)
                f.domain = jf.at("domain").get<std::vector<std::string>>();
            if (f.kind == FeatureKind::Numeric) {
                f.min = jf.at("min").get<double>();
                f.max = jf.at("max").get<double>();
            }
            s.features.push_back(std::move(f));
        }
        s.label_field = j.at("label_field").get<std::string>();
        s.label_domain = j.at("label_domain").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed schema JSON: ") + e.what());
    }
    s.validate();
    return s;
}

std::string schema_to_json(const FeatureSchema& schema) {
    json features = json::array();
    for (const auto& f : schema.features) {
        json jf = {{"name", f.name}, {"kind", std::string(to_string(f.kind))}};
        if (f.kind == FeatureKind::Categorical) jf["domain"] = f.domain;
        if (f.kind == FeatureKind::Numeric) {
            jf["min"] = f.min;
            jf["max"] = f.max;
        }
        features.push_back(std::move(jf));
    }
    json j = {{"features", features},
              {"label_field", schema.label_field},
              {"label_domain", schema.label_domain}};
    return j.dump(2) + "\n";
}

FeatureSchema load_schema(const std::filesystem::path& path) {
    return schema_from_json(detail::read_file(path));
}

void save_schema(const FeatureSchema& schema, const std::filesystem::path& path) {
    detail::write_file(path, schema_to_json(schema));
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

std::string value_text(const FeatureValue& v) {
    if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
    return detail::format_double(std::get<double>(v));
}

const FeatureValue& FeatureRecord::at(std::string_view feature) const {
    auto it = values.find(std::string(feature));
    if (it == values.end())
        throw DataError("record has no feature: " + std::string(feature));
    return it->second;
}

void validate_record(const FeatureRecord& rec, const FeatureSchema& schema) {
    if (rec.values.size() != schema.features.size()) {
        for (const auto& [name, _] : rec.values)
            if (!schema.find(name))
                throw DataError("record has undeclared feature: " + name);
    }
    for (const auto& f : schema.features) {
        auto it = rec.values.find(f.name);
        if (it == rec.values.end())
            throw DataError("record missing feature: " + f.name);
        const FeatureValue& v = it->second;
        switch (f.kind) {
            case FeatureKind::Categorical: {
                if (!std::holds_alternative<std::string>(v))
                    throw DataError("categorical feature needs a string value: " + f.name);
                const auto& s = std::get<std::string>(v);
                if (std::find(f.domain.begin(), f.domain.end(), s) == f.domain.end())
                    throw DataError("value outside domain of feature " + f.name + ": " + s);
                break;
            }
            case FeatureKind::Numeric: {
                if (!std::holds_alternative<double>(v))
                    throw DataError("numeric feature needs a numeric value: " + f.name);
                double d = std::get<double>(v);
                if (!std::isfinite(d) || d < f.min || d > f.max)
                    throw DataError("value outside [min,max] of feature " + f.name +
                                    ": " + detail::format_double(d));
                break;
            }
            case FeatureKind::Text:
                if (!std::holds_alternative<std::string>(v))
                    throw DataError("text feature needs a string value: " + f.name);
                break;
        }
    }
    if (rec.label && schema.label_index(*rec.label) < 0)
        throw DataError("label outside label_domain: " + *rec.label);
}

void Dataset::validate() const {
    schema.validate();
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            validate_record(records[i], schema);
        } catch (const DataError& e) {
            throw DataError("row " + std::to_string(i) + ": " + e.what());
        }
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

bool needs_quoting(const std::string& field) {
    return field.find_first_of(",\"\n\r") != std::string::npos;
}

} // namespace

std::string csv_escape(const std::string& field) {
    if (!needs_quoting(field)) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

namespace {

// Parses the whole file into rows of fields; handles quoted fields with
// embedded commas/newlines and doubled quotes.  Row numbers are 1-based and
// count logical CSV rows (quoted newlines do not start a new row).
std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                const std::string& where) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    std::size_t i = 0;
    const std::size_t n = text.size();
    auto end_field = [&] {
        row.push_back(field);
        field.clear();
        field_was_quoted = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(row);
        row.clear();
    };
    while (i < n) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < n && text[i + 1] == '"') {
                    field += '"';
                    i += 2;
                } else {
                    in_quotes = false;
                    ++i;
                }
            } else {
                field += c;
                ++i;
            }
        } else {
            if (c == '"') {
                if (!field.empty())
                    throw DataError(where + ": row " + std::to_string(rows.size() + 1) +
                                    ": quote inside unquoted field");
                in_quotes = true;
                field_was_quoted = true;
                ++i;
            } else if (c == ',') {
                end_field();
                ++i;
            } else if (c == '\r') {
                ++i; // part of CRLF or stray; LF handling ends the row
            } else if (c == '\n') {
                end_row();
                ++i;
            } else {
                field += c;
                ++i;
            }
        }
    }
    if (in_quotes)
        throw DataError(where + ": unterminated quoted field at end of file");
    if (!field.empty() || !row.empty() || field_was_quoted) end_row();
    return rows;
}

} // namespace

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
    return parse_csv(detail::read_file(path), path.string());
}

Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
    schema.validate();
    const std::string where = path.string();
    auto rows = parse_csv(detail::read_file(path), where);
    if (rows.empty()) throw DataError(where + ": missing header row");

    const auto& header = rows.front();
    std::map<std::string, std::size_t> col_of;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!col_of.emplace(header[c], c).second)
            throw DataError(where + ": duplicate column: " + header[c]);
    }
    for (const auto& f : schema.features)
        if (!col_of.count(f.name))
            throw DataError(where + ": missing column: " + f.name);
    if (!col_of.count(schema.label_field))
        throw DataError(where + ": missing column: " + schema.label_field);
    if (header.size() != schema.features.size() + 1) {
        for (const auto& [name, _] : col_of)
            if (name != schema.label_field && !schema.find(name))
                throw DataError(where + ": undeclared column: " + name);
    }

    Dataset ds;
    ds.schema = schema;
    ds.provenance = "csv:" + where;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        const std::string at_row = where + ": row " + std::to_string(r + 1);
        if (cells.size() != header.size())
            throw DataError(at_row + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(cells.size()));
        FeatureRecord rec;
        for (const auto& f : schema.features) {
            const std::string& cell = cells[col_of[f.name]];
            if (f.kind == FeatureKind::Numeric) {
                if (cell.empty())
                    throw DataError(at_row + ": missing value in field " + f.name);
                double d = 0;
                auto res = std::from_chars(cell.data(), cell.data() + cell.size(), d);
                if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
                    throw DataError(at_row + ": field " + f.name +
                                    " is not numeric: " + cell);
                rec.values[f.name] = d;
            } else {
                if (cell.empty() && f.kind == FeatureKind::Categorical)
                    throw DataError(at_row + ": missing value in field " + f.name);
                rec.values[f.name] = cell;
            }
        }
        const std::string& label_cell = cells[col_of[schema.label_field]];
        if (!label_cell.empty()) rec.label = label_cell;
        try {
            validate_record(rec, schema);
        } catch (const DataError& e) {
            throw DataError(at_row + ": " + e.what());
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::string out;
    for (const auto& f : ds.schema.features) {
        out += csv_escape(f.name);
        out += ',';
    }
    out += csv_escape(ds.schema.label_field);
    out += '\n';
    for (const auto& rec : ds.records) {
        for (const auto& f : ds.schema.features) {
            out += csv_escape(value_text(rec.at(f.name)));
            out += ',';
        }
        if (rec.label) out += csv_escape(*rec.label);
        out += '\n';
    }
    detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Split / encode / augment
// ---------------------------------------------------------------------------

SplitResult split(const Dataset& ds, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw DataError("split ratio must lie strictly between 0 and 1");
    const std::size_t n = ds.size();
    // Round to nearest; exact halves go to the training side.
    auto n_train = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(n) + 0.5));
    if (n_train == 0 || n_train == n)
        throw DataError("split would leave an empty side (n=" + std::to_string(n) +
                        ", ratio=" + detail::format_double(ratio) + ")");

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);

    std::vector<bool> in_train(n, false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;

    SplitResult out;
    out.train.schema = ds.schema;
    out.test.schema = ds.schema;
    out.train.provenance = ds.provenance + "|split:train";
    out.test.provenance = ds.provenance + "|split:test";
    for (std::size_t i = 0; i < n; ++i)
        (in_train[i] ? out.train : out.test).records.push_back(ds.records[i]);
    return out;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>>
EncodedMatrix::column_groups() const {
    std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
    for (std::size_t c = 0; c < column_names.size(); ++c) {
        std::string key = column_names[c].substr(0, column_names[c].find('='));
        if (!groups.empty() && groups.back().first == key)
            groups.back().second.push_back(c);
        else
            groups.push_back({key, {c}});
    }
    return groups;
}

EncodedMatrix encode(const Dataset& ds) {
    ds.validate();
    EncodedMatrix m;
    for (const auto& f : ds.schema.features) {
        if (f.kind == FeatureKind::Categorical)
            for (const auto& v : f.domain) m.column_names.push_back(f.name + "=" + v);
        else if (f.kind == FeatureKind::Numeric)
            m.column_names.push_back(f.name);
    }
    m.cols = m.column_names.size();
    m.rows = ds.size();
    m.class_labels = ds.schema.label_domain;
    m.data.assign(m.rows * m.cols, 0.0);
    m.label_indices.reserve(m.rows);

    for (std::size_t r = 0; r < ds.size(); ++r) {
        const auto& rec = ds.records[r];
        if (!rec.label)
            throw DataError("row " + std::to_string(r) + ": unlabeled record cannot be encoded");
        m.label_indices.push_back(ds.schema.label_index(*rec.label));
        std::size_t c = 0;
        for (const auto& f : ds.schema.features) {
            if (f.kind == FeatureKind::Categorical) {
                const auto& s = std::get<std::string>(rec.at(f.name));
                for (const auto& v : f.domain) {
                    m.data[r * m.cols + c] = (s == v) ? 1.0 : 0.0;
                    ++c;
                }
            } else if (f.kind == FeatureKind::Numeric) {
                double d = std::get<double>(rec.at(f.name));
                m.data[r * m.cols + c] = (d - f.min) / (f.max - f.min);
                ++c;
            }
        }
    }
    return m;
}

Dataset augment(const Dataset& ds,
                const std::vector<std::map<std::string, std::string>>& latents,
                const std::vector<LatentSpec>& latent_schema) {
    if (latent_schema.empty()) return ds;
    if (latents.size() != ds.size())
        throw DataError("augment: " + std::to_string(ds.size()) + " records but " +
                        std::to_string(latents.size()) + " latent maps");

    Dataset out = ds;
    out.provenance = ds.provenance + "|augmented";
    for (const auto& spec : latent_schema) {
        if (out.schema.find(spec.name))
            throw DataError("augment: latent name collides with feature: " + spec.name);
        FeatureSpec f;
        f.name = spec.name;
        f.kind = FeatureKind::Categorical;
        f.domain = spec.domain;
        out.schema.features.push_back(std::move(f));
    }
    out.schema.validate();

    for (std::size_t i = 0; i < out.records.size(); ++i) {
        for (const auto& spec : latent_schema) {
            auto it = latents[i].find(spec.name);
            if (it == latents[i].end())
                throw DataError("augment: row " + std::to_string(i) +
                                " missing latent: " + spec.name);
            if (std::find(spec.domain.begin(), spec.domain.end(), it->second) ==
                spec.domain.end())
                throw DataError("augment: row " + std::to_string(i) + " latent " +
                                spec.name + " has undeclared label: " + it->second);
            out.records[i].values[spec.name] = it->second;
        }
    }
    return out;
}

} // namespace lfm
