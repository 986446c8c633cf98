#include "lfm/presets.hpp"

namespace lfm {

namespace {

Preset build_diversion() {
    Preset p;
    p.name = "diversion";
    p.description = "Pretrial diversion intake with support-program latents";

    p.schema.features = {
        {"Risk", FeatureKind::Categorical, {"Highest", "High", "Medium"}},
        {"AdOffense", FeatureKind::Categorical, {"Drugs", "Property", "DUI"}},
        {"Gender", FeatureKind::Categorical, {"Female", "Male"}},
        {"EmplymntS", FeatureKind::Categorical, {"Full Time", "None", "Part Time"}},
        {"MaritalS", FeatureKind::Categorical, {"Single", "Married", "Divorced"}},
        {"EducationS", FeatureKind::Categorical,
         {"HighSchool", "No HighSchool", "Some College or Graduated"}},
        {"HousingS", FeatureKind::Categorical,
         {"Friend or Family", "Own/Rent", "No Home Reported"}},
        {"MedicaidS", FeatureKind::Categorical, {"Yes", "No"}},
    };
    p.schema.label_field = "Outcome";
    p.schema.label_domain = {"Completed", "Revoked", "Not Completed", "Other"};

    p.program_text = R"(# Pretrial diversion chain: grounded facts -> conditions -> support programs.
stage P {
  P_unstable_work <- EmplymntS in {"None", "Part Time"}
  P_no_diploma <- EducationS == "No HighSchool"
  P_single <- MaritalS == "Single"
  P_drug_offense <- AdOffense == "Drugs"
  P_unstable_housing <- HousingS in {"No Home Reported", "Friend or Family"}
  P_high_risk <- Risk in {"High", "Highest"}
  P_no_coverage <- MedicaidS == "No"
}
stage O1 {
  O_low_ses <- P_unstable_work & P_no_diploma
  O_weak_support <- P_single & !P_drug_offense
  O_weak_support <- P_drug_offense & !P_single
  O_instability <- P_unstable_work & !P_unstable_housing
  O_instability <- P_unstable_housing & !P_unstable_work
}
stage Z {
  latent "Support_1" = "education" <- O_low_ses
  latent "Support_1" = "employment" <- P_unstable_work & !O_low_ses
  latent "Support_1" = "thinking for a change" <- Gender in {"Female", "Male"}
  latent "Support_2" = "substance abuse treatment" <- O_weak_support & P_high_risk
  latent "Support_2" = "mental health treatment" <- O_instability & !O_weak_support
  latent "Support_2" = "anger management" <- Gender in {"Female", "Male"}
  latent "Support_3" = "community service" <- O_instability
  latent "Support_3" = "positive peer mentoring" <- P_no_coverage & !O_instability
  latent "Support_3" = "domestic violence counseling" <- Gender in {"Female", "Male"}
  score += 3.0 <- P_high_risk
  score += 2.0 <- O_low_ses
  score += 2.0 <- O_weak_support
  score += 1.5 <- O_instability
  score += 1.5 <- P_no_coverage
}
bins {
  [0, 4) -> "moderate"
  [4, 7.5) -> "high"
  [7.5, 10] -> "very_high"
}
)";
    p.program = parse_chain(p.program_text);

    p.style.phrases = {
        {"P_unstable_work", "an unsteady work situation"},
        {"P_no_diploma", "schooling short of a diploma"},
        {"P_single", "single marital status"},
        {"P_drug_offense", "a drug related admitting offense"},
        {"P_unstable_housing", "precarious housing"},
        {"P_high_risk", "an elevated risk assessment"},
        {"P_no_coverage", "no medical coverage"},
        {"O_low_ses", "low socioeconomic status"},
        {"O_weak_support", "a weak social safety net"},
        {"O_instability", "compounding instability"},
    };
    p.style.p_template = "The record shows {items}.";
    p.style.o_template = "Together these indicate {items}.";
    p.style.z_template = "Hence the recommended programs are {items}.";
    p.style.latent_sentences = {
        {"education", "Education programming would close the schooling gap."},
        {"employment", "Steady employment would anchor the reentry plan."},
        {"thinking for a change",
         "Thinking for a change would target criminogenic patterns."},
        {"substance abuse treatment",
         "Substance abuse treatment is crucial for recovery from substance dependence."},
        {"mental health treatment",
         "Mental health treatment would stabilize underlying conditions."},
        {"anger management", "Anger management coursework would curb escalation risks."},
        {"community service", "Community service builds accountability and local ties."},
        {"positive peer mentoring",
         "Positive peer mentoring would model constructive routines."},
        {"domestic violence counseling",
         "Domestic violence counseling would address relational harm."},
    };

    p.profile_pattern =
        "The client is {Gender}, marital status {MaritalS}. Risk assessment: {Risk}. "
        "Admitting offense: {AdOffense}. Employment status: {EmplymntS}. "
        "Education: {EducationS}. Housing: {HousingS}. Medicaid enrolled: {MedicaidS}.";
    p.profile = ProfileTemplate::parse(p.profile_pattern);

    p.prompt.system = "You are an experienced case manager reviewing pretrial "
                      "diversion files.";
    p.prompt.instruction =
        "Read the client profile, reason step by step from the stated facts to the "
        "client's circumstances, and name the support programs the client needs. "
        "Finish with a line of the form @@latents {\"Support_1\": \"...\"}.\n\n{profile}";
    p.prompt.stage_plan = {
        "Step 1. From the client profile below, list the facts you can ground "
        "directly.\n\n{profile}",
        "Step 2. Grounded facts so far:\n{previous}\n\nGiven the profile below, derive "
        "the intermediate conditions these facts imply.\n\n{profile}",
        "Step 3. Derivation so far:\n{previous}\n\nName the support programs for the "
        "client in the profile below and finish with the @@latents footer "
        "line.\n\n{profile}",
    };

    // Each latent label gives +3 to one favored class and -1 elsewhere;
    // observed columns stay within +-1, a 3:1 scale so the latent signal
    // dominates.  Classes in label_domain order: Completed, Revoked,
    // Not Completed, Other.  The favored classes were chosen empirically so
    // the generated label distribution stays roughly balanced at
    // noise_scale 0.5.
    p.outcome_weights = {
        {"Support_1=education", {-1.0, -1.0, 3.0, -1.0}},
        {"Support_1=employment", {3.0, -1.0, -1.0, -1.0}},
        {"Support_1=thinking for a change", {-1.0, 3.0, -1.0, -1.0}},
        {"Support_2=substance abuse treatment", {-1.0, 3.0, -1.0, -1.0}},
        {"Support_2=mental health treatment", {-1.0, -1.0, 3.0, -1.0}},
        {"Support_2=anger management", {-1.0, -1.0, -1.0, 3.0}},
        {"Support_3=community service", {-1.0, -1.0, 3.0, -1.0}},
        {"Support_3=positive peer mentoring", {3.0, -1.0, -1.0, -1.0}},
        {"Support_3=domestic violence counseling", {-1.0, -1.0, -1.0, 3.0}},
        {"Gender=Male", {0.0, 1.0, 0.0, -1.0}},
        {"MedicaidS=Yes", {1.0, 0.0, -1.0, 0.0}},
        {"AdOffense=DUI", {0.0, 1.0, 0.0, -1.0}},
    };
    p.noise_scale = 0.5;
    return p;
}

Preset build_discharge() {
    Preset p;
    p.name = "discharge";
    p.description = "Inpatient discharge planning with a social-support latent";

    p.schema.features = {
        {"Gender", FeatureKind::Categorical, {"Female", "Male"}},
        {"Race", FeatureKind::Categorical,
         {"White", "Black/African American", "Other", "Asian", "Hispanic or Latino",
          "White - Other European"}},
        {"Marital_Status", FeatureKind::Categorical,
         {"Married", "Single", "Widowed", "Other"}},
        {"Insurance", FeatureKind::Categorical, {"Other", "Medicare", "Medicaid"}},
        {"Language", FeatureKind::Categorical, {"English", "Other"}},
        {"Admit_Type", FeatureKind::Categorical, {"Emergency", "Other", "Elective"}},
    };
    p.schema.label_field = "Discharge_Location";
    p.schema.label_domain = {"Home", "Other", "Died"};

    // The rules never reference Race: it stays a passenger column.
    p.program_text = R"(# Discharge planning chain: grounded facts -> conditions -> support level.
stage P {
  P_alone <- Marital_Status in {"Single", "Widowed"}
  P_public_insurance <- Insurance in {"Medicare", "Medicaid"}
  P_language_barrier <- Language == "Other"
  P_emergency <- Admit_Type == "Emergency"
}
stage O1 {
  O_limited_network <- P_alone & P_language_barrier
  O_limited_network <- P_alone & P_public_insurance
}
stage Z {
  latent "Social_Support" = "limited" <- O_limited_network
  latent "Social_Support" = "moderate" <- P_alone
  latent "Social_Support" = "strong" <- Gender in {"Female", "Male"}
  score += 4.0 <- O_limited_network
  score += 3.0 <- P_emergency
  score += 3.0 <- P_language_barrier
}
bins {
  [0, 4) -> "moderate"
  [4, 7.5) -> "high"
  [7.5, 10] -> "very_high"
}
)";
    p.program = parse_chain(p.program_text);

    p.style.phrases = {
        {"P_alone", "living without a partner"},
        {"P_public_insurance", "public insurance coverage"},
        {"P_language_barrier", "a language barrier"},
        {"P_emergency", "an emergency admission"},
        {"O_limited_network", "a thin support network"},
    };
    p.style.p_template = "The chart notes {items}.";
    p.style.o_template = "Together these point to {items}.";
    p.style.z_template = "Hence the expected social support level is {items}.";
    p.style.latent_sentences = {
        {"limited", "Discharge planning should assume limited help at home."},
        {"moderate", "Discharge planning can count on moderate help at home."},
        {"strong", "Discharge planning can rely on strong help at home."},
    };

    p.profile_pattern =
        "The patient is {Gender}, race {Race}, marital status {Marital_Status}. "
        "Insurance: {Insurance}. Primary language: {Language}. "
        "Admission type: {Admit_Type}.";
    p.profile = ProfileTemplate::parse(p.profile_pattern);

    p.prompt.system = "You are a discharge planner summarizing inpatient stays.";
    p.prompt.instruction =
        "Read the patient profile and assess the level of social support available "
        "after discharge. Finish with a line of the form "
        "@@latents {\"Social_Support\": \"...\"}.\n\n{profile}";
    p.prompt.stage_plan = {
        "Step 1. From the patient profile below, list the facts you can ground "
        "directly.\n\n{profile}",
        "Step 2. Grounded facts so far:\n{previous}\n\nGiven the profile below, derive "
        "the intermediate conditions these facts imply.\n\n{profile}",
        "Step 3. Derivation so far:\n{previous}\n\nAssess the social support level for "
        "the patient in the profile below and finish with the @@latents footer "
        "line.\n\n{profile}",
    };

    p.outcome_weights = {
        {"Social_Support=strong", {2.0, -1.0, -1.0}},
        {"Social_Support=moderate", {0.0, 0.5, -0.5}},
        {"Social_Support=limited", {-2.0, 1.5, 0.5}},
        {"Admit_Type=Elective", {1.0, -0.5, -0.5}},
        {"Language=Other", {-0.5, 0.5, 0.0}},
        {"Insurance=Medicare", {-0.5, 0.0, 0.5}},
    };
    p.noise_scale = 0.5;
    return p;
}

} // namespace

const Preset& diversion_preset() {
    static const Preset preset = build_diversion();
    return preset;
}

const Preset& discharge_preset() {
    static const Preset preset = build_discharge();
    return preset;
}

const Preset* find_preset(std::string_view name) {
    if (name == "diversion") return &diversion_preset();
    if (name == "discharge") return &discharge_preset();
    return nullptr;
}

std::vector<std::string> preset_names() { return {"diversion", "discharge"}; }

} // namespace lfm
