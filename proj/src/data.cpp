#include "pcp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "pcp/error.hpp"
#include "pcp/stats.hpp"

namespace pcp {

namespace {

constexpr int kSchemaVersion = 1;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                           : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string row_error(std::size_t row, std::string_view column, std::string_view what) {
  std::ostringstream os;
  os << "row " << row << ", column " << column << ": " << what;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------- schema

CategoricalSchema::CategoricalSchema(std::vector<Feature> features) : features_(std::move(features)) {
  std::set<std::string> names;
  offsets_.reserve(features_.size());
  for (const auto& f : features_) {
    if (f.name.empty()) throw ValidationError("schema: feature with empty name");
    if (f.name == "c" || f.name == "r" || f.name == "w")
      throw ValidationError("schema: feature name '" + f.name + "' is reserved");
    if (!names.insert(f.name).second) throw ValidationError("schema: duplicate feature '" + f.name + "'");
    if (f.modalities.size() < 2)
      throw ValidationError("schema: feature '" + f.name + "' needs at least 2 modalities");
    std::set<int> codes(f.modalities.begin(), f.modalities.end());
    if (codes.size() != f.modalities.size())
      throw ValidationError("schema: feature '" + f.name + "' has repeated modality codes");
    offsets_.push_back(width_);
    width_ += f.modalities.size() - 1;
  }
}

CategoricalSchema CategoricalSchema::default_insurance() {
  auto codes = [](int first, int count) {
    std::vector<int> v(count);
    std::iota(v.begin(), v.end(), first);
    return v;
  };
  return CategoricalSchema({
      {"car_age", codes(1, 12)},
      {"car_group", codes(1, 6)},
      {"insuree_age", codes(1, 9)},
      {"profession", codes(1, 8)},
      {"usage", codes(1, 4)},
      {"region", codes(1, 10)},
      {"zone", codes(2, 5)},
      {"gender", codes(1, 2)},
  });
}

CategoricalSchema CategoricalSchema::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("features"))
    throw ValidationError("schema: expected an object with a 'features' array");
  const int version = j.value("version", kSchemaVersion);
  if (version != kSchemaVersion)
    throw ValidationError("schema: unsupported version " + std::to_string(version));
  std::vector<Feature> features;
  try {
    for (const auto& f : j.at("features")) {
      features.push_back({f.at("name").get<std::string>(), f.at("modalities").get<std::vector<int>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("schema: ") + e.what());
  }
  return CategoricalSchema(std::move(features));
}

CategoricalSchema CategoricalSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json CategoricalSchema::to_json() const {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : features_) features.push_back({{"name", f.name}, {"modalities", f.modalities}});
  return {{"version", kSchemaVersion}, {"features", features}};
}

void CategoricalSchema::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write schema file " + path.string());
  out << to_json().dump(2) << '\n';
}

std::optional<std::size_t> CategoricalSchema::feature_index(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return i;
  return std::nullopt;
}

int CategoricalSchema::modality_position(std::size_t feature, int code) const {
  const auto& m = features_[feature].modalities;
  const auto it = std::find(m.begin(), m.end(), code);
  return it == m.end() ? -1 : static_cast<int>(it - m.begin());
}

double CategoricalSchema::cell_count() const {
  double cells = 1.0;
  for (const auto& f : features_) cells *= static_cast<double>(f.modalities.size());
  return cells;
}

std::string CategoricalSchema::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json().dump())));
  return buf;
}

CategoricalSchema CategoricalSchema::without_feature(std::size_t feature) const {
  auto rest = features_;
  rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(feature));
  return CategoricalSchema(std::move(rest));
}

bool CategoricalSchema::operator==(const CategoricalSchema& other) const {
  if (features_.size() != other.features_.size()) return false;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name != other.features_[i].name ||
        features_[i].modalities != other.features_[i].modalities)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------- dataset

Dataset::Dataset(SchemaPtr schema, std::vector<Record> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  if (!schema_) throw ValidationError("dataset: null schema");
  if (records_.empty()) throw ValidationError("dataset: no records");
  const std::size_t nf = schema_->feature_count();
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& rec = records_[i];
    if (rec.covariates.size() != nf)
      throw ValidationError(row_error(i + 1, "*", "wrong number of covariates"));
    for (std::size_t f = 0; f < nf; ++f) {
      if (schema_->modality_position(f, rec.covariates[f]) < 0)
        throw ValidationError(row_error(i + 1, schema_->features()[f].name,
                                        "unknown modality code " + std::to_string(rec.covariates[f])));
    }
    if ((rec.c != 0 && rec.c != 1)) throw ValidationError(row_error(i + 1, "c", "not binary"));
    if ((rec.r != 0 && rec.r != 1)) throw ValidationError(row_error(i + 1, "r", "not binary"));
    if (!(rec.w > 0.0 && rec.w <= 1.0)) throw ValidationError(row_error(i + 1, "w", "weight outside (0, 1]"));
  }
}

std::vector<double> Dataset::weights() const {
  std::vector<double> w(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) w[i] = records_[i].w;
  return w;
}

double Dataset::total_weight() const {
  double s = 0.0;
  for (const auto& r : records_) s += r.w;
  return s;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Record> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(records_.at(i));
  return Dataset(schema_, std::move(out));
}

Dataset Dataset::without_feature(std::size_t feature) const {
  auto schema = std::make_shared<const CategoricalSchema>(schema_->without_feature(feature));
  std::vector<Record> out = records_;
  for (auto& r : out) r.covariates.erase(r.covariates.begin() + static_cast<std::ptrdiff_t>(feature));
  return Dataset(std::move(schema), std::move(out));
}

// ---------------------------------------------------------------- csv

Dataset parse_csv(std::string_view text, SchemaPtr schema) {
  if (!schema) throw ValidationError("parse_csv: null schema");
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    line = text.substr(pos, nl - pos);
    pos = nl + 1;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) throw ValidationError("csv: empty file");
  if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
  const auto header = split_fields(line);

  const std::size_t nf = schema->feature_count();
  std::vector<std::string> expected;
  for (const auto& f : schema->features()) expected.push_back(f.name);
  expected.insert(expected.end(), {"c", "r", "w"});

  std::vector<int> column_of(expected.size(), -1);
  for (std::size_t k = 0; k < header.size(); ++k) {
    const auto it = std::find(expected.begin(), expected.end(), header[k]);
    if (it == expected.end()) throw ValidationError("csv header: unexpected column '" + header[k] + "'");
    auto& slot = column_of[static_cast<std::size_t>(it - expected.begin())];
    if (slot >= 0) throw ValidationError("csv header: duplicate column '" + header[k] + "'");
    slot = static_cast<int>(k);
  }
  for (std::size_t e = 0; e < expected.size(); ++e)
    if (column_of[e] < 0) throw ValidationError("csv header: missing column '" + expected[e] + "'");

  std::vector<Record> records;
  std::size_t row = 0;
  while (next_line(line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ValidationError(row_error(row, "*", "expected " + std::to_string(header.size()) + " fields"));

    auto parse_int = [&](std::size_t e) {
      const auto& s = fields[static_cast<std::size_t>(column_of[e])];
      if (s.empty()) throw ValidationError(row_error(row, expected[e], "missing value"));
      int v = 0;
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw ValidationError(row_error(row, expected[e], "not an integer: '" + s + "'"));
      return v;
    };

    Record rec;
    rec.covariates.resize(nf);
    for (std::size_t f = 0; f < nf; ++f) {
      rec.covariates[f] = parse_int(f);
      if (schema->modality_position(f, rec.covariates[f]) < 0)
        throw ValidationError(row_error(row, expected[f],
                                        "unknown modality code " + std::to_string(rec.covariates[f])));
    }
    rec.c = parse_int(nf);
    rec.r = parse_int(nf + 1);
    if (rec.c != 0 && rec.c != 1) throw ValidationError(row_error(row, "c", "not binary"));
    if (rec.r != 0 && rec.r != 1) throw ValidationError(row_error(row, "r", "not binary"));

    const auto& ws = fields[static_cast<std::size_t>(column_of[nf + 2])];
    if (ws.empty()) throw ValidationError(row_error(row, "w", "missing value"));
    const auto [p, ec] = std::from_chars(ws.data(), ws.data() + ws.size(), rec.w);
    if (ec != std::errc() || p != ws.data() + ws.size())
      throw ValidationError(row_error(row, "w", "not a number: '" + ws + "'"));
    if (!(rec.w > 0.0 && rec.w <= 1.0))
      throw ValidationError(row_error(row, "w", "weight " + ws + " outside (0, 1]"));
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw ValidationError("csv: no data rows");
  return Dataset(std::move(schema), std::move(records));
}

Dataset load_csv(const std::filesystem::path& path, SchemaPtr schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open data file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), std::move(schema));
}

std::string format_csv(const Dataset& d) {
  std::string out;
  for (const auto& f : d.schema().features()) {
    out += f.name;
    out += ',';
  }
  out += "c,r,w\n";
  char wbuf[32];
  for (const auto& rec : d.records()) {
    for (int code : rec.covariates) {
      out += std::to_string(code);
      out += ',';
    }
    out += rec.c ? '1' : '0';
    out += ',';
    out += rec.r ? '1' : '0';
    out += ',';
    std::snprintf(wbuf, sizeof wbuf, "%.17g", rec.w);
    out += wbuf;
    out += '\n';
  }
  return out;
}

void save_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write data file " + path.string());
  out << format_csv(d);
}

// ---------------------------------------------------------------- encoding

Eigen::RowVectorXd encode_row(const CategoricalSchema& schema, std::span<const int> covariates) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(schema.design_width()));
  row(0) = 1.0;
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const int pos = schema.modality_position(f, covariates[f]);
    if (pos < 0) throw ValidationError("encode: unknown modality for feature " + schema.features()[f].name);
    if (pos > 0) row(static_cast<Eigen::Index>(schema.block_offset(f) + static_cast<std::size_t>(pos) - 1)) = 1.0;
  }
  return row;
}

std::vector<int> decode_row(const CategoricalSchema& schema, const Eigen::RowVectorXd& row) {
  if (static_cast<std::size_t>(row.size()) != schema.design_width())
    throw ValidationError("decode: row width does not match schema");
  std::vector<int> out(schema.feature_count());
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const auto& m = schema.features()[f].modalities;
    int code = m.front();
    for (std::size_t k = 1; k < m.size(); ++k) {
      if (row(static_cast<Eigen::Index>(schema.block_offset(f) + k - 1)) != 0.0) code = m[k];
    }
    out[f] = code;
  }
  return out;
}

DesignMatrix one_hot_encode(const Dataset& d) {
  const auto& schema = d.schema();
  DesignMatrix x = DesignMatrix::Zero(static_cast<Eigen::Index>(d.size()),
                                      static_cast<Eigen::Index>(schema.design_width()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    x(ii, 0) = 1.0;
    const auto& cov = d[i].covariates;
    for (std::size_t f = 0; f < schema.feature_count(); ++f) {
      const int pos = schema.modality_position(f, cov[f]);
      if (pos > 0) x(ii, static_cast<Eigen::Index>(schema.block_offset(f) + static_cast<std::size_t>(pos) - 1)) = 1.0;
    }
  }
  return x;
}

// ---------------------------------------------------------------- splits

void SplitPlan::validate() const {
  for (double f : {train, validation, test})
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("split plan: each fraction must lie in (0, 1)");
  if (std::abs(train + validation + test - 1.0) > 1e-9)
    throw ValidationError("split plan: fractions must sum to 1");
}

SplitIndices split_indices(std::size_t n, const SplitPlan& plan) {
  plan.validate();
  const auto order = shuffled_indices(n, plan.seed);
  const auto cut1 = static_cast<std::size_t>(std::floor(static_cast<double>(n) * plan.train));
  const auto cut2 = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * (plan.train + plan.validation)));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut1));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(cut1),
                      order.begin() + static_cast<std::ptrdiff_t>(cut2));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(cut2), order.end());
  if (s.train.empty() || s.validation.empty() || s.test.empty())
    throw ValidationError("split: a partition is empty after rounding (n=" + std::to_string(n) + ")");
  return s;
}

SplitDatasets split(const Dataset& d, const SplitPlan& plan) {
  const auto s = split_indices(d.size(), plan);
  return {d.subset(s.train), d.subset(s.validation), d.subset(s.test)};
}

FoldAssignment make_folds(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ValidationError("make_folds: need at least 2 folds");
  if (static_cast<std::size_t>(folds) > n)
    throw ValidationError("make_folds: more folds than records");
  FoldAssignment fa;
  fa.folds = folds;
  fa.seed = seed;
  fa.fold.assign(n, 0);
  const auto order = shuffled_indices(n, seed);
  for (std::size_t pos = 0; pos < n; ++pos) fa.fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  return fa;
}

std::vector<std::size_t> FoldAssignment::members(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] != k) out.push_back(i);
  return out;
}

double weighted_mean(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw ValidationError("weighted_mean: empty input");
  if (values.size() != weights.size()) throw ValidationError("weighted_mean: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(weights[i] > 0.0)) throw ValidationError("weighted_mean: weights must be positive");
    num += weights[i] * values[i];
    den += weights[i];
  }
  return num / den;
}

// ---------------------------------------------------------------- groups

namespace {

std::size_t require_feature(const Dataset& d, const std::string& name) {
  const auto f = d.schema().feature_index(name);
  if (!f) throw ValidationError("partition: feature '" + name + "' not in schema");
  return *f;
}

// Group of an item whose weight mass occupies [before, before + mass) out of total.
int quantile_group(double before, double mass, double total, int groups) {
  const double mid = (before + 0.5 * mass) / total;
  return std::min(groups - 1, static_cast<int>(std::floor(mid * groups)));
}

}  // namespace

std::vector<Group> partition(const Dataset& d, const GroupScheme& scheme) {
  std::vector<Group> out;
  switch (scheme.kind) {
    case GroupScheme::Kind::ByModality: {
      const auto f = require_feature(d, scheme.feature);
      const auto& mods = d.schema().features()[f].modalities;
      std::vector<std::vector<std::size_t>> members(mods.size());
      for (std::size_t i = 0; i < d.size(); ++i)
        members[static_cast<std::size_t>(d.schema().modality_position(f, d[i].covariates[f]))].push_back(i);
      for (std::size_t k = 0; k < mods.size(); ++k) {
        if (members[k].empty()) continue;
        out.push_back({scheme.feature + "=" + std::to_string(mods[k]), std::move(members[k])});
      }
      break;
    }
    case GroupScheme::Kind::ByQuartile: {
      if (scheme.groups < 1) throw ValidationError("partition: groups must be >= 1");
      const auto f = require_feature(d, scheme.feature);
      const auto& mods = d.schema().features()[f].modalities;
      std::vector<double> mass(mods.size(), 0.0);
      for (const auto& rec : d.records())
        mass[static_cast<std::size_t>(d.schema().modality_position(f, rec.covariates[f]))] += rec.w;
      const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
      std::vector<int> group_of(mods.size(), -1);
      double before = 0.0;
      for (std::size_t k = 0; k < mods.size(); ++k) {
        if (mass[k] > 0.0) group_of[k] = quantile_group(before, mass[k], total, scheme.groups);
        before += mass[k];
      }
      out.resize(static_cast<std::size_t>(scheme.groups));
      std::vector<std::vector<int>> codes(out.size());
      for (std::size_t k = 0; k < mods.size(); ++k)
        if (group_of[k] >= 0) codes[static_cast<std::size_t>(group_of[k])].push_back(mods[k]);
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto k = static_cast<std::size_t>(d.schema().modality_position(f, d[i].covariates[f]));
        out[static_cast<std::size_t>(group_of[k])].indices.push_back(i);
      }
      for (std::size_t g = 0; g < out.size(); ++g) {
        if (out[g].indices.empty())
          throw ValidationError("partition: quartile group " + std::to_string(g + 1) + " of '" +
                                scheme.feature + "' is empty");
        std::string label = scheme.feature + " Q" + std::to_string(g + 1) + " {";
        for (std::size_t k = 0; k < codes[g].size(); ++k)
          label += (k ? " " : "") + std::to_string(codes[g][k]);
        out[g].label = label + "}";
      }
      break;
    }
    case GroupScheme::Kind::ByPredictedStatistic: {
      if (scheme.groups < 1) throw ValidationError("partition: groups must be >= 1");
      if (scheme.statistic.size() != d.size())
        throw ValidationError("partition: statistic must have one value per record");
      std::vector<std::size_t> order(d.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scheme.statistic[a] < scheme.statistic[b];
      });
      const double total = d.total_weight();
      out.resize(static_cast<std::size_t>(scheme.groups));
      double before = 0.0;
      for (auto i : order) {
        const int g = quantile_group(before, d[i].w, total, scheme.groups);
        out[static_cast<std::size_t>(g)].indices.push_back(i);
        before += d[i].w;
      }
      for (std::size_t g = 0; g < out.size(); ++g) {
        if (out[g].indices.empty())
          throw ValidationError("partition: predicted-statistic group " + std::to_string(g + 1) + " is empty");
        std::sort(out[g].indices.begin(), out[g].indices.end());
        out[g].label = "Q" + std::to_string(g + 1);
      }
      break;
    }
  }
  if (out.empty()) throw ValidationError("partition: no groups");
  return out;
}

}  // namespace pcp
