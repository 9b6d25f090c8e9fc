// Cohort ingestion: CSV / binary loaders, covariate preprocessing,
// administrative censoring, train/val/test splitting and cohort bundles.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "distill.hpp"
#include "pooling.hpp"
#include "types.hpp"

namespace survfuse {

enum class Modality { kText = 0, kCov = 1, kGe = 2 };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::kText: return "text";
    case Modality::kCov: return "cov";
    case Modality::kGe: return "ge";
  }
  return "?";
}

inline Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::kText;
  if (s == "cov") return Modality::kCov;
  if (s == "ge") return Modality::kGe;
  throw ValidationError("unknown modality: " + std::string(s));
}

/// Raw clinical covariates before encoding. Empty strings mean missing.
struct RawClinical {
  std::optional<double> age;
  std::string sex;
  std::string race;
  std::string stage;
  std::string cancer_type;
};

struct Sample {
  std::string id;
  std::vector<double> cov;  // empty when absent
  std::vector<double> ge;   // empty when absent
  std::optional<Matrix> text_hidden;
  std::optional<std::vector<double>> text_pooled;
  std::optional<TeacherRecord> teacher;
  std::optional<RawClinical> raw_clinical;
  Outcome outcome;

  bool has(Modality m) const {
    switch (m) {
      case Modality::kText: return text_hidden.has_value() || text_pooled.has_value();
      case Modality::kCov: return !cov.empty() || raw_clinical.has_value();
      case Modality::kGe: return !ge.empty();
    }
    return false;
  }
};

struct Cohort {
  std::vector<Sample> samples;
  std::vector<std::string> cov_names;
  std::size_t ge_dim = 0;
  std::size_t text_dim = 0;
  bool raw_covariates = false;
  nlohmann::json covariate_meta = nlohmann::json::object();

  std::size_t size() const { return samples.size(); }
  std::size_t cov_dim() const { return cov_names.size(); }
  std::vector<Outcome> outcomes() const {
    std::vector<Outcome> o;
    o.reserve(samples.size());
    for (const auto& s : samples) o.push_back(s.outcome);
    return o;
  }
};

struct CohortSplit {
  std::vector<std::size_t> train, val, test;
};

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  CsvTable t;
  t.path = path;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (t.header.empty()) {
      for (auto& f : fields) f = trim(f);
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ValidationError(path + ":" + std::to_string(lineno) + " (id " + trim(fields.front()) + "): expected " +
                            std::to_string(t.header.size()) + " columns, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw ValidationError(path + ": missing header row");
  if (t.header.front() != "id") throw ValidationError(path + ": first column must be \"id\"");
  return t;
}

// ---------------------------------------------------------------------------
// Outcomes

/// Caps follow-up at `horizon` years; later events become censorings.
inline Outcome administrative_censor(const Outcome& o, double horizon_years = 5.0) {
  if (o.time > horizon_years) return {horizon_years, false};
  return o;
}

inline std::vector<std::pair<std::string, Outcome>> read_outcomes(const std::string& path) {
  const auto t = read_csv(path);
  const auto col = [&](std::string_view name) {
    auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) throw ValidationError(path + ": missing column " + std::string(name));
    return static_cast<std::size_t>(it - t.header.begin());
  };
  const std::size_t ct = col("time_years"), ce = col("event");
  std::vector<std::pair<std::string, Outcome>> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string id = trim(t.rows[r][0]);
    const std::string where = path + ":" + std::to_string(t.line_numbers[r]) + " (id " + id + ")";
    if (!seen.insert(id).second) throw ValidationError(where + ": duplicate id");
    double time = 0.0, ev = 0.0;
    if (!parse_double(t.rows[r][ct], time)) throw ValidationError(where + ": unparseable time_years");
    if (!parse_double(t.rows[r][ce], ev) || (ev != 0.0 && ev != 1.0))
      throw ValidationError(where + ": event must be 0 or 1");
    if (!(time > 0.0) || !std::isfinite(time)) throw ValidationError(where + ": time_years must be positive");
    out.push_back({id, Outcome{time, ev == 1.0}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary hidden-state / pooled-vector files

inline constexpr std::string_view kHiddenMagic = "SVHS";
inline constexpr std::string_view kPooledMagic = "SVPV";
inline constexpr std::uint32_t kBinaryVersion = 1;

struct IdMatrix {
  std::string id;
  Matrix values;
};

struct IdVector {
  std::string id;
  std::vector<double> values;
};

inline void write_hidden_states(const std::string& path, std::span<const IdMatrix> items) {
  BinaryWriter w;
  w.bytes(kHiddenMagic);
  w.u32(kBinaryVersion);
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const auto& it : items) {
    w.str(it.id);
    w.u32(static_cast<std::uint32_t>(it.values.rows));
    w.u32(static_cast<std::uint32_t>(it.values.cols));
    for (double v : it.values.data) w.f32(static_cast<float>(v));
  }
  write_file(path, w.buffer());
}

inline void write_pooled(const std::string& path, std::span<const IdVector> items) {
  BinaryWriter w;
  w.bytes(kPooledMagic);
  w.u32(kBinaryVersion);
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const auto& it : items) {
    w.str(it.id);
    w.u32(static_cast<std::uint32_t>(it.values.size()));
    for (double v : it.values) w.f32(static_cast<float>(v));
  }
  write_file(path, w.buffer());
}

/// Magic of a binary text-feature file ("SVHS" or "SVPV").
inline std::string binary_magic(const std::string& path) {
  const auto data = read_file(path);
  if (data.size() < 4) throw ValidationError(path + ": too short for a survfuse binary file");
  return data.substr(0, 4);
}

inline std::vector<IdMatrix> read_hidden_states(const std::string& path) {
  BinaryReader r(read_file(path), path);
  if (r.bytes(4) != kHiddenMagic) throw ValidationError(path + ": bad magic, expected SVHS");
  if (const auto v = r.u32(); v != kBinaryVersion) throw ValidationError(path + ": unsupported version " + std::to_string(v));
  const auto n = r.u32();
  std::vector<IdMatrix> out;
  out.reserve(n);
  std::size_t d_seen = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    IdMatrix m;
    m.id = r.str();
    const auto rows = r.u32(), cols = r.u32();
    if (rows == 0 || cols == 0) throw ValidationError(path + ": sample " + m.id + " has an empty hidden-state matrix");
    if (d_seen != 0 && cols != d_seen)
      throw ValidationError(path + ": sample " + m.id + " has width " + std::to_string(cols) + ", expected " +
                            std::to_string(d_seen));
    d_seen = cols;
    m.values = Matrix(rows, cols);
    for (auto& v : m.values.data) v = r.f32();
    out.push_back(std::move(m));
  }
  if (!r.at_end()) throw ValidationError(path + ": trailing bytes after last sample");
  return out;
}

inline std::vector<IdVector> read_pooled(const std::string& path) {
  BinaryReader r(read_file(path), path);
  if (r.bytes(4) != kPooledMagic) throw ValidationError(path + ": bad magic, expected SVPV");
  if (const auto v = r.u32(); v != kBinaryVersion) throw ValidationError(path + ": unsupported version " + std::to_string(v));
  const auto n = r.u32();
  std::vector<IdVector> out;
  std::size_t d_seen = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    IdVector v;
    v.id = r.str();
    const auto d = r.u32();
    if (d == 0 || (d_seen != 0 && d != d_seen)) throw ValidationError(path + ": sample " + v.id + " has inconsistent width");
    d_seen = d;
    v.values.resize(d);
    for (auto& x : v.values) x = r.f32();
    out.push_back(std::move(v));
  }
  if (!r.at_end()) throw ValidationError(path + ": trailing bytes after last sample");
  return out;
}

// ---------------------------------------------------------------------------
// Covariate encoding

inline constexpr std::array<const char*, 7> kCancerFamilies = {
    "gastrointestinal", "gynecological", "genitourinary", "respiratory", "skin", "brain", "other"};

inline constexpr std::array<const char*, 5> kRawClinicalColumns = {"age", "sex", "race", "stage", "cancer_type"};

/// Maps a cancer-type label (family name or TCGA study code) to its family.
/// Unknown labels map to "other" unless `strict`.
inline std::string cancer_family(std::string_view label, bool strict = false) {
  std::string l;
  for (char c : trim(label)) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (l.rfind("tcga-", 0) == 0) l.erase(0, 5);
  for (const char* f : kCancerFamilies)
    if (l == f) return f;
  static const std::map<std::string, std::string, std::less<>> kCodes = {
      {"coad", "gastrointestinal"}, {"read", "gastrointestinal"}, {"stad", "gastrointestinal"},
      {"esca", "gastrointestinal"}, {"lihc", "gastrointestinal"}, {"paad", "gastrointestinal"},
      {"chol", "gastrointestinal"}, {"ov", "gynecological"},      {"ucec", "gynecological"},
      {"cesc", "gynecological"},    {"ucs", "gynecological"},     {"blca", "genitourinary"},
      {"kirc", "genitourinary"},    {"kirp", "genitourinary"},    {"kich", "genitourinary"},
      {"prad", "genitourinary"},    {"tgct", "genitourinary"},    {"luad", "respiratory"},
      {"lusc", "respiratory"},      {"meso", "respiratory"},      {"skcm", "skin"},
      {"gbm", "brain"},             {"lgg", "brain"}};
  if (auto it = kCodes.find(l); it != kCodes.end()) return it->second;
  if (strict) throw ValidationError("unknown cancer type \"" + std::string(label) + "\"");
  return "other";
}

/// Ordinal stage code: "I"->1 ... "IV"->4; accepts "Stage IIB" style labels.
inline std::optional<int> stage_code(std::string_view label) {
  std::string s;
  for (char c : trim(label)) s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (s.rfind("STAGE", 0) == 0) s = trim(s.substr(5));
  std::size_t n = 0;
  while (n < s.size() && (s[n] == 'I' || s[n] == 'V')) ++n;
  const std::string roman = s.substr(0, n);
  if (roman == "I") return 1;
  if (roman == "II") return 2;
  if (roman == "III") return 3;
  if (roman == "IV") return 4;
  double v = 0.0;
  if (parse_double(s, v) && v >= 1 && v <= 4 && v == std::floor(v)) return static_cast<int>(v);
  return std::nullopt;
}

inline bool is_female(std::string_view sex) {
  std::string s;
  for (char c : trim(sex)) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return s == "female" || s == "f";
}

struct CovariateEncoding {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;  // aligned with the input rows
  nlohmann::json meta;
};

/// Encodes raw clinical rows: age and ordinal stage min-max scaled with
/// extrema from `train` rows only (no clipping elsewhere), sex and race as
/// single binary columns, cancer family one-hot.
inline CovariateEncoding preprocess_covariates(std::span<const RawClinical> rows, std::span<const std::size_t> train,
                                               bool strict_cancer_types = false) {
  if (train.empty()) throw ValidationError("preprocess_covariates: empty training split");
  double age_min = std::numeric_limits<double>::infinity(), age_max = -age_min;
  int st_min = std::numeric_limits<int>::max(), st_max = std::numeric_limits<int>::min();
  std::map<std::string, std::size_t> race_counts;
  for (std::size_t i : train) {
    const auto& r = rows[i];
    if (!r.age) throw ValidationError("preprocess_covariates: missing age in training row");
    age_min = std::min(age_min, *r.age);
    age_max = std::max(age_max, *r.age);
    const auto sc = stage_code(r.stage);
    if (!sc) throw ValidationError("preprocess_covariates: unparseable stage \"" + r.stage + "\"");
    st_min = std::min(st_min, *sc);
    st_max = std::max(st_max, *sc);
    ++race_counts[trim(r.race)];
  }
  // Majority race on the training split; ties go to the lexicographically first label.
  std::string majority;
  std::size_t best = 0;
  for (const auto& [label, count] : race_counts)
    if (count > best) {
      best = count;
      majority = label;
    }

  auto scale = [](double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; };

  CovariateEncoding enc;
  enc.names = {"age", "sex_female", "race_majority", "stage"};
  for (const char* f : kCancerFamilies) enc.names.push_back(std::string("family_") + f);
  enc.values.reserve(rows.size());
  for (const auto& r : rows) {
    const auto sc = stage_code(r.stage);
    if (!r.age || !sc) throw ValidationError("preprocess_covariates: row with missing age or stage");
    std::vector<double> v = {scale(*r.age, age_min, age_max), is_female(r.sex) ? 1.0 : 0.0,
                             trim(r.race) == majority ? 1.0 : 0.0,
                             scale(static_cast<double>(*sc), st_min, st_max)};
    const std::string fam = cancer_family(r.cancer_type, strict_cancer_types);
    for (const char* f : kCancerFamilies) v.push_back(fam == f ? 1.0 : 0.0);
    enc.values.push_back(std::move(v));
  }
  enc.meta = {{"age_min", age_min},   {"age_max", age_max},         {"stage_min", st_min},
              {"stage_max", st_max},  {"race_majority", majority},  {"sex_indicator", "female"},
              {"stage_encoding", "I=1,II=2,III=3,IV=4"},           {"families", kCancerFamilies}};
  return enc;
}

/// Encodes raw clinical covariates in place, fitting scaling on `split.train`.
inline void encode_cohort_covariates(Cohort& cohort, const CohortSplit& split, bool strict_cancer_types = false) {
  if (!cohort.raw_covariates) return;
  std::vector<RawClinical> rows;
  rows.reserve(cohort.size());
  for (const auto& s : cohort.samples) {
    if (!s.raw_clinical) throw ValidationError("sample " + s.id + " has no clinical covariates");
    rows.push_back(*s.raw_clinical);
  }
  auto enc = preprocess_covariates(rows, split.train, strict_cancer_types);
  for (std::size_t i = 0; i < cohort.size(); ++i) cohort.samples[i].cov = std::move(enc.values[i]);
  cohort.cov_names = enc.names;
  cohort.covariate_meta = enc.meta;
  cohort.raw_covariates = false;
}

// ---------------------------------------------------------------------------
// Loading

struct CohortPaths {
  std::string covariates;
  std::string ge;
  std::string hidden_states;  // SVHS or SVPV
  std::string teacher;
  std::string outcomes;
};

struct CohortSchema {
  std::set<Modality> required;
  double horizon_years = 5.0;  // <= 0 disables administrative censoring
  bool strict_cancer_types = false;
};

struct LoadStats {
  std::size_t dropped_missing = 0;
  std::size_t unmatched_ids = 0;
};

/// Loads one Sample per outcome id, attaching whatever modalities the files
/// provide. Samples lacking a required modality, or with missing critical
/// covariates, are dropped. Gene-expression blanks are imputed to 0.
inline Cohort load_cohort(const CohortPaths& paths, const CohortSchema& schema = {}, LoadStats* stats = nullptr) {
  LoadStats local;
  LoadStats& st = stats ? *stats : local;
  if (paths.outcomes.empty()) throw ValidationError("load_cohort: outcomes path is required");

  Cohort cohort;
  const auto outcomes = read_outcomes(paths.outcomes);

  // Covariates: raw clinical columns or an already-numeric table.
  std::unordered_map<std::string, std::vector<double>> cov;
  std::unordered_map<std::string, RawClinical> raw;
  std::set<std::string> cov_incomplete;
  if (!paths.covariates.empty()) {
    const auto t = read_csv(paths.covariates);
    std::vector<std::string> cols(t.header.begin() + 1, t.header.end());
    std::set<std::string> colset(cols.begin(), cols.end());
    const bool is_raw = std::all_of(kRawClinicalColumns.begin(), kRawClinicalColumns.end(),
                                    [&](const char* c) { return colset.count(c) > 0; });
    cohort.raw_covariates = is_raw;
    if (!is_raw) cohort.cov_names = cols;
    std::map<std::string, std::size_t> idx;
    for (std::size_t c = 0; c < t.header.size(); ++c) idx[t.header[c]] = c;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      const std::string id = trim(row[0]);
      const std::string where = t.path + ":" + std::to_string(t.line_numbers[r]) + " (id " + id + ")";
      if (cov.count(id) || raw.count(id)) throw ValidationError(where + ": duplicate id");
      if (is_raw) {
        RawClinical rc;
        const std::string age = trim(row[idx["age"]]);
        if (!age.empty()) {
          double a = 0.0;
          if (!parse_double(age, a)) throw ValidationError(where + ": unparseable age");
          rc.age = a;
        }
        rc.sex = trim(row[idx["sex"]]);
        rc.race = trim(row[idx["race"]]);
        rc.stage = trim(row[idx["stage"]]);
        rc.cancer_type = trim(row[idx["cancer_type"]]);
        if (!rc.age || rc.sex.empty() || rc.race.empty() || !stage_code(rc.stage) || rc.cancer_type.empty()) {
          cov_incomplete.insert(id);
          continue;
        }
        cancer_family(rc.cancer_type, schema.strict_cancer_types);
        raw.emplace(id, std::move(rc));
      } else {
        std::vector<double> v(cols.size());
        bool missing = false;
        for (std::size_t c = 0; c < cols.size(); ++c) {
          const std::string cell = trim(row[c + 1]);
          if (cell.empty()) {
            missing = true;
            break;
          }
          if (!parse_double(cell, v[c])) throw ValidationError(where + ": unparseable value in column " + cols[c]);
        }
        if (missing) {
          cov_incomplete.insert(id);
          continue;
        }
        cov.emplace(id, std::move(v));
      }
    }
  }

  std::unordered_map<std::string, std::vector<double>> ge;
  if (!paths.ge.empty()) {
    const auto t = read_csv(paths.ge);
    cohort.ge_dim = t.header.size() - 1;
    if (cohort.ge_dim == 0) throw ValidationError(t.path + ": no gene columns");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string id = trim(t.rows[r][0]);
      const std::string where = t.path + ":" + std::to_string(t.line_numbers[r]) + " (id " + id + ")";
      if (ge.count(id)) throw ValidationError(where + ": duplicate id");
      std::vector<double> v(cohort.ge_dim, 0.0);
      for (std::size_t c = 0; c < cohort.ge_dim; ++c) {
        const std::string cell = trim(t.rows[r][c + 1]);
        if (cell.empty()) continue;  // imputed to 0
        if (!parse_double(cell, v[c])) throw ValidationError(where + ": unparseable value in column " + t.header[c + 1]);
      }
      ge.emplace(id, std::move(v));
    }
  }

  std::unordered_map<std::string, Matrix> hidden;
  std::unordered_map<std::string, std::vector<double>> pooled;
  if (!paths.hidden_states.empty()) {
    const std::string magic = binary_magic(paths.hidden_states);
    if (magic == kHiddenMagic) {
      for (auto& m : read_hidden_states(paths.hidden_states)) {
        cohort.text_dim = m.values.cols;
        if (!all_finite(m.values.data)) throw ValidationError(paths.hidden_states + ": non-finite value for " + m.id);
        if (!hidden.emplace(m.id, std::move(m.values)).second)
          throw ValidationError(paths.hidden_states + ": duplicate id " + m.id);
      }
    } else if (magic == kPooledMagic) {
      for (auto& v : read_pooled(paths.hidden_states)) {
        cohort.text_dim = v.values.size();
        if (!pooled.emplace(v.id, std::move(v.values)).second)
          throw ValidationError(paths.hidden_states + ": duplicate id " + v.id);
      }
    } else {
      throw ValidationError(paths.hidden_states + ": unknown magic \"" + magic + "\"");
    }
  }

  std::unordered_map<std::string, TeacherRecord> teacher;
  if (!paths.teacher.empty())
    for (auto& r : read_teacher_jsonl(paths.teacher)) {
      const std::string id = r.id;
      if (!teacher.emplace(id, std::move(r)).second) throw ValidationError(paths.teacher + ": duplicate id " + id);
    }

  std::set<std::string> outcome_ids;
  for (const auto& [id, o] : outcomes) {
    outcome_ids.insert(id);
    Sample s;
    s.id = id;
    s.outcome = schema.horizon_years > 0 ? administrative_censor(o, schema.horizon_years) : o;
    if (auto it = cov.find(id); it != cov.end()) s.cov = it->second;
    if (auto it = raw.find(id); it != raw.end()) s.raw_clinical = it->second;
    if (auto it = ge.find(id); it != ge.end()) s.ge = it->second;
    if (auto it = hidden.find(id); it != hidden.end()) s.text_hidden = it->second;
    if (auto it = pooled.find(id); it != pooled.end()) s.text_pooled = it->second;
    if (auto it = teacher.find(id); it != teacher.end()) s.teacher = it->second;

    bool keep = true;
    for (Modality m : schema.required) keep = keep && s.has(m);
    if (schema.required.count(Modality::kCov) && cov_incomplete.count(id)) keep = false;
    if (!s.has(Modality::kText) && !s.has(Modality::kCov) && !s.has(Modality::kGe)) keep = false;
    if (!keep) {
      ++st.dropped_missing;
      continue;
    }
    cohort.samples.push_back(std::move(s));
  }
  auto count_unmatched = [&](const auto& m) {
    for (const auto& kv : m)
      if (!outcome_ids.count(kv.first)) ++st.unmatched_ids;
  };
  count_unmatched(cov);
  count_unmatched(ge);
  count_unmatched(hidden);
  count_unmatched(pooled);
  if (st.dropped_missing > 0)
    warn("load_cohort: dropped " + std::to_string(st.dropped_missing) + " samples with missing modalities");
  if (cohort.samples.empty()) throw ValidationError("load_cohort: no usable samples");
  return cohort;
}

// ---------------------------------------------------------------------------
// Splitting

/// Seeded shuffle into train/val/test. Train and validation sizes are
/// floor(ratio * n); the test split takes the remainder.
inline CohortSplit split_cohort(std::size_t n, std::array<double, 3> ratios = {0.70, 0.10, 0.20},
                                std::uint64_t seed = 0) {
  if (n < 3) throw ValidationError("split_cohort: need at least 3 samples");
  for (double r : ratios)
    if (!(r >= 0.0)) throw ValidationError("split_cohort: negative ratio");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ValidationError("split_cohort: ratios must sum to 1");
  const auto nd = static_cast<double>(n);
  const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * nd + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * nd + 1e-9));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);

  CohortSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

/// Pooled text embedding for a sample (pools hidden states on demand).
inline std::vector<double> text_embedding(const Sample& s) {
  if (s.text_pooled) return *s.text_pooled;
  if (s.text_hidden) return attention_pool(*s.text_hidden).embedding;
  throw ValidationError("sample " + s.id + " has no text features");
}

// ---------------------------------------------------------------------------
// Cohort bundles

inline constexpr int kBundleVersion = 1;

struct CohortBundle {
  Cohort cohort;
  CohortSplit split;
  nlohmann::json manifest;
};

namespace detail {

inline void write_numeric_csv(const std::string& path, const std::vector<std::string>& names, const Cohort& c,
                              const std::vector<double> Sample::*field) {
  std::string out = "id";
  for (const auto& n : names) out += "," + detail::csv_escape(n);
  out += "\n";
  for (const auto& s : c.samples) {
    const auto& v = s.*field;
    if (v.empty()) continue;
    out += detail::csv_escape(s.id);
    for (double x : v) out += "," + format_double(x);
    out += "\n";
  }
  write_file(path, out);
}

}  // namespace detail

inline void write_outcomes_csv(const std::string& path, std::span<const std::string> ids, std::span<const Outcome> outs) {
  std::string text = "id,time_years,event\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    text += detail::csv_escape(ids[i]) + "," + format_double(outs[i].time) + "," + (outs[i].event ? "1" : "0") + "\n";
  write_file(path, text);
}

/// Writes a validated, versioned cohort directory: encoded covariates, gene
/// expression, outcomes, text features, teacher records and the split.
inline void save_bundle(const std::string& dir, const Cohort& cohort, const CohortSplit& split,
                        nlohmann::json extra = nlohmann::json::object()) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (cohort.raw_covariates) throw ValidationError("save_bundle: covariates must be encoded first");
  std::vector<std::string> ids;
  std::vector<Outcome> outs;
  for (const auto& s : cohort.samples) {
    ids.push_back(s.id);
    outs.push_back(s.outcome);
  }
  write_outcomes_csv(dir + "/outcomes.csv", ids, outs);
  nlohmann::json files = {{"outcomes", "outcomes.csv"}, {"split", "split.csv"}};
  if (!cohort.cov_names.empty()) {
    detail::write_numeric_csv(dir + "/covariates.csv", cohort.cov_names, cohort, &Sample::cov);
    files["covariates"] = "covariates.csv";
  }
  if (cohort.ge_dim > 0) {
    std::vector<std::string> names;
    for (std::size_t g = 0; g < cohort.ge_dim; ++g) names.push_back("g" + std::to_string(g + 1));
    detail::write_numeric_csv(dir + "/ge.csv", names, cohort, &Sample::ge);
    files["ge"] = "ge.csv";
  }
  std::vector<IdMatrix> hidden;
  std::vector<IdVector> pooled;
  for (const auto& s : cohort.samples) {
    if (s.text_hidden) hidden.push_back({s.id, *s.text_hidden});
    else if (s.text_pooled) pooled.push_back({s.id, *s.text_pooled});
  }
  if (!hidden.empty() && !pooled.empty()) throw ValidationError("save_bundle: mixed hidden-state and pooled text features");
  if (!hidden.empty()) {
    write_hidden_states(dir + "/text.svhs", hidden);
    files["hidden_states"] = "text.svhs";
  } else if (!pooled.empty()) {
    write_pooled(dir + "/text.svpv", pooled);
    files["hidden_states"] = "text.svpv";
  }
  std::string teacher;
  for (const auto& s : cohort.samples)
    if (s.teacher) teacher += teacher_record_to_json(*s.teacher).dump() + "\n";
  if (!teacher.empty()) {
    write_file(dir + "/teacher.jsonl", teacher);
    files["teacher"] = "teacher.jsonl";
  }
  std::string split_csv = "id,split\n";
  std::vector<std::string> tag(cohort.size());
  for (auto i : split.train) tag[i] = "train";
  for (auto i : split.val) tag[i] = "val";
  for (auto i : split.test) tag[i] = "test";
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (tag[i].empty()) throw ValidationError("save_bundle: split does not cover sample " + cohort.samples[i].id);
    split_csv += detail::csv_escape(cohort.samples[i].id) + "," + tag[i] + "\n";
  }
  write_file(dir + "/split.csv", split_csv);

  nlohmann::json manifest = {{"format", "survfuse-cohort-bundle"},
                             {"version", kBundleVersion},
                             {"survfuse_version", kVersion},
                             {"n_samples", cohort.size()},
                             {"cov_names", cohort.cov_names},
                             {"ge_dim", cohort.ge_dim},
                             {"text_dim", cohort.text_dim},
                             {"covariate_meta", cohort.covariate_meta},
                             {"split_sizes", {split.train.size(), split.val.size(), split.test.size()}},
                             {"files", files}};
  for (auto& [k, v] : extra.items()) manifest[k] = v;
  write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

inline CohortBundle load_bundle(const std::string& dir) {
  CohortBundle b;
  b.manifest = nlohmann::json::parse(read_file(dir + "/manifest.json"));
  if (b.manifest.value("format", "") != "survfuse-cohort-bundle") throw ValidationError(dir + ": not a cohort bundle");
  if (b.manifest.value("version", 0) != kBundleVersion)
    throw ValidationError(dir + ": unsupported bundle version " + b.manifest["version"].dump());
  const auto& files = b.manifest["files"];
  auto path_of = [&](const char* key) { return files.contains(key) ? dir + "/" + files[key].get<std::string>() : std::string(); };
  CohortPaths p{path_of("covariates"), path_of("ge"), path_of("hidden_states"), path_of("teacher"), path_of("outcomes")};
  CohortSchema schema;
  schema.horizon_years = 0.0;  // already applied before bundling
  b.cohort = load_cohort(p, schema);
  b.cohort.covariate_meta = b.manifest.value("covariate_meta", nlohmann::json::object());
  if (b.cohort.size() != b.manifest["n_samples"].get<std::size_t>())
    throw ValidationError(dir + ": sample count does not match manifest");

  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < b.cohort.size(); ++i) pos[b.cohort.samples[i].id] = i;
  const auto t = read_csv(dir + "/split.csv");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string id = trim(t.rows[r][0]), which = trim(t.rows[r][1]);
    auto it = pos.find(id);
    if (it == pos.end()) throw ValidationError(dir + "/split.csv: unknown id " + id);
    if (which == "train") b.split.train.push_back(it->second);
    else if (which == "val") b.split.val.push_back(it->second);
    else if (which == "test") b.split.test.push_back(it->second);
    else throw ValidationError(dir + "/split.csv: unknown split \"" + which + "\"");
  }
  for (auto* v : {&b.split.train, &b.split.val, &b.split.test}) std::sort(v->begin(), v->end());
  return b;
}

}  // namespace survfuse
