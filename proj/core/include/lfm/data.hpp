#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lfm {

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

enum class FeatureKind { Categorical, Numeric, Text };

std::string_view to_string(FeatureKind k);
FeatureKind feature_kind_from_string(std::string_view s);

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Categorical;
    std::vector<std::string> domain; // Categorical only; order fixes one-hot order
    double min = 0.0;                // Numeric only
    double max = 1.0;                // Numeric only

    bool operator==(const FeatureSpec&) const = default;
};

struct FeatureSchema {
    std::vector<FeatureSpec> features;
    std::string label_field;
    std::vector<std::string> label_domain;

    const FeatureSpec* find(std::string_view name) const;
    int label_index(std::string_view label) const; // -1 when absent

    // Throws DataError: duplicate names, empty/duplicate categorical domains,
    // numeric min >= max, label_field colliding with a feature name,
    // empty/duplicate label domain.
    void validate() const;

    bool operator==(const FeatureSchema&) const = default;
};

FeatureSchema schema_from_json(const std::string& text);
std::string schema_to_json(const FeatureSchema& schema);
FeatureSchema load_schema(const std::filesystem::path& path);
void save_schema(const FeatureSchema& schema, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

using FeatureValue = std::variant<std::string, double>;

// Renders a value the way it is written to CSV / substituted into text:
// strings verbatim, numerics in shortest round-trip decimal form.
std::string value_text(const FeatureValue& v);

struct FeatureRecord {
    std::map<std::string, FeatureValue> values;
    std::optional<std::string> label;

    const FeatureValue& at(std::string_view feature) const; // throws DataError
    bool operator==(const FeatureRecord&) const = default;
};

// Throws DataError naming the offending feature when `rec` does not conform
// to `schema`: missing/extra features, value type mismatch, categorical value
// outside its domain, numeric value outside [min,max], label outside domain.
void validate_record(const FeatureRecord& rec, const FeatureSchema& schema);

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct Dataset {
    FeatureSchema schema;
    std::vector<FeatureRecord> records;
    std::string provenance;

    std::size_t size() const { return records.size(); }
    void validate() const; // schema + every record (errors name the row)
};

// CSV dialect: UTF-8, comma separator, double-quote escaping ("" inside a
// quoted field), first row is the header.  Header must contain exactly the
// schema features plus the label column (any column order).  An empty label
// cell means "unlabeled".  Errors name the row and field.
Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema);
void write_csv(const Dataset& ds, const std::filesystem::path& path);

// Schema-free CSV access in the same dialect, for sidecar files.
std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path);
std::string csv_escape(const std::string& field);

// ---------------------------------------------------------------------------
// Split / encode / augment
// ---------------------------------------------------------------------------

struct SplitResult {
    Dataset train;
    Dataset test;
};

// Seeded shuffle; |train| = round(ratio * n) with ties rounding toward train.
// Within each side the original record order is preserved.  Throws DataError
// when either side would be empty.
SplitResult split(const Dataset& ds, double ratio, std::uint64_t seed);

struct EncodedMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;               // row-major
    std::vector<std::string> column_names;  // "feature=value" or "feature"
    std::vector<int> label_indices;         // index into class_labels
    std::vector<std::string> class_labels;

    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols, cols};
    }

    // Columns grouped by originating feature: one-hot blocks share the name
    // before '='; numeric columns form singleton groups.  Declaration order.
    std::vector<std::pair<std::string, std::vector<std::size_t>>> column_groups() const;
};

// One-hot encodes categorical features over their declared domains (domain
// order), min-max scales numerics to [0,1], skips text features.  Column
// order follows schema feature order.  Requires every record labeled.
EncodedMatrix encode(const Dataset& ds);

struct LatentSpec {
    std::string name;
    std::vector<std::string> domain;

    bool operator==(const LatentSpec&) const = default;
};

// Appends one categorical column per latent spec; `latents[i]` supplies the
// values for record i.  The original columns are untouched.  Throws DataError
// on size mismatch, missing latent value, or a label outside its domain.
// An empty `latent_schema` returns the input unchanged.
Dataset augment(const Dataset& ds,
                const std::vector<std::map<std::string, std::string>>& latents,
                const std::vector<LatentSpec>& latent_schema);

} // namespace lfm
