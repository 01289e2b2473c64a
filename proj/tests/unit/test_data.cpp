#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "pcp/data.hpp"
#include "pcp/error.hpp"
#include "pcp/synth.hpp"

using namespace pcp;
using testing::make_schema;

namespace {

const char* kFourRows =
    "x,c,r,w\n"
    "1,0,0,1\n"
    "2,1,0,0.5\n"
    "1,1,1,0.25\n"
    "2,0,1,1\n";

std::string error_of(const std::string& text, SchemaPtr schema) {
  try {
    parse_csv(text, schema);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("csv: minimal well-formed file") {
  const auto s = make_schema({{"x", {1, 2}}});
  const auto d = parse_csv(kFourRows, s);
  CHECK(d.size() == 4);
  CHECK(d[1].covariates[0] == 2);
  CHECK(d[2].outcome_class() == 3);
  CHECK(d[1].w == 0.5);
  CHECK(d.total_weight() == doctest::Approx(2.75));
}

TEST_CASE("csv: out-of-range weight names row and column") {
  const auto s = make_schema({{"x", {1, 2}}});
  const auto msg = error_of("x,c,r,w\n1,0,0,1\n2,1,0,0.5\n1,1,1,1.2\n", s);
  CHECK(msg.find("row 3") != std::string::npos);
  CHECK(msg.find("w") != std::string::npos);
}

TEST_CASE("csv: malformed inputs are rejected") {
  const auto s = make_schema({{"x", {1, 2}}});
  CHECK_FALSE(error_of("x,c,r\n1,0,0\n", s).empty());             // missing w
  CHECK_FALSE(error_of("x,c,r,w,extra\n1,0,0,1,3\n", s).empty());  // unexpected column
  CHECK_FALSE(error_of("x,c,r,w\n3,0,0,1\n", s).empty());          // unknown modality
  CHECK_FALSE(error_of("x,c,r,w\n1,2,0,1\n", s).empty());          // c not binary
  CHECK_FALSE(error_of("x,c,r,w\n1,0,0,0\n", s).empty());          // w = 0
  CHECK_FALSE(error_of("x,c,r,w\n1,0,0,abc\n", s).empty());
  CHECK_FALSE(error_of("x,c,r,w\n", s).empty());                   // no rows
  CHECK_FALSE(error_of("", s).empty());
}

TEST_CASE("csv: column order in the header is free") {
  const auto s = make_schema({{"x", {1, 2}}});
  const auto a = parse_csv(kFourRows, s);
  const auto b = parse_csv("w,r,c,x\n1,0,0,1\n0.5,0,1,2\n0.25,1,1,1\n1,1,0,2\n", s);
  CHECK(a.records() == b.records());
}

TEST_CASE("csv: synthetic sample round-trips bit-identically") {
  const auto dgp = SyntheticDGP::blank(testing::default_schema());
  const auto sample = sample_dataset(dgp, 500, 11);
  const auto dir = testing::scratch_dir("csv_roundtrip");
  save_csv(sample.data, dir / "d.csv");
  const auto back = load_csv(dir / "d.csv", sample.data.schema_ptr());
  CHECK(back.records() == sample.data.records());
  CHECK(format_csv(back) == format_csv(sample.data));
}

TEST_CASE("schema: design width") {
  CHECK(CategoricalSchema::default_insurance().design_width() == 49);
  CHECK(CategoricalSchema({{"g", {0, 1}}}).design_width() == 2);
  CHECK(CategoricalSchema({}).design_width() == 1);
}

TEST_CASE("schema: invalid definitions") {
  CHECK_THROWS_AS(CategoricalSchema({{"a", {1}}}), ValidationError);
  CHECK_THROWS_AS(CategoricalSchema({{"a", {1, 1}}}), ValidationError);
  CHECK_THROWS_AS(CategoricalSchema({{"a", {1, 2}}, {"a", {1, 2}}}), ValidationError);
  CHECK_THROWS_AS(CategoricalSchema({{"w", {1, 2}}}), ValidationError);
}

TEST_CASE("schema: json round trip and fingerprint") {
  const auto s = CategoricalSchema::default_insurance();
  const auto back = CategoricalSchema::from_json(s.to_json());
  CHECK(back == s);
  CHECK(back.fingerprint() == s.fingerprint());
  CHECK(s.without_feature(0).fingerprint() != s.fingerprint());
}

TEST_CASE("encode: reference row and inverse") {
  const auto s = CategoricalSchema::default_insurance();
  std::vector<int> ref;
  for (const auto& f : s.features()) ref.push_back(f.modalities.front());
  const auto row = encode_row(s, ref);
  CHECK(row.size() == 49);
  CHECK(row(0) == 1.0);
  CHECK(row.sum() == 1.0);

  std::vector<int> other;
  for (const auto& f : s.features()) other.push_back(f.modalities.back());
  const auto r2 = encode_row(s, other);
  CHECK(r2.sum() == doctest::Approx(1.0 + static_cast<double>(s.feature_count())));
  CHECK(decode_row(s, r2) == other);
  CHECK(decode_row(s, row) == ref);
}

TEST_CASE("encode: design matrix rows match encode_row") {
  const auto sample = sample_dataset(SyntheticDGP::blank(testing::default_schema()), 50, 3);
  const auto x = one_hot_encode(sample.data);
  CHECK(x.rows() == 50);
  CHECK(x.cols() == 49);
  for (std::size_t i = 0; i < 50; ++i)
    CHECK((x.row(static_cast<Eigen::Index>(i)) - encode_row(sample.data.schema(), sample.data[i].covariates))
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("split: sizes under floor rounding") {
  SplitPlan plan;
  auto a = split_indices(100, plan);
  CHECK(a.train.size() == 70);
  CHECK(a.validation.size() == 15);
  CHECK(a.test.size() == 15);

  auto b = split_indices(6333, plan);
  CHECK(b.train.size() == 4433);
  CHECK(b.validation.size() == 950);
  CHECK(b.test.size() == 950);

  std::vector<std::size_t> all;
  for (auto* v : {&b.train, &b.validation, &b.test}) all.insert(all.end(), v->begin(), v->end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
}

TEST_CASE("split: determinism and validation") {
  SplitPlan plan;
  plan.seed = 5;
  CHECK(split_indices(200, plan).train == split_indices(200, plan).train);
  SplitPlan other = plan;
  other.seed = 6;
  CHECK(split_indices(200, plan).train != split_indices(200, other).train);
  SplitPlan bad{0.5, 0.5, 0.1, 0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(split_indices(3, plan), ValidationError);
}

TEST_CASE("folds: sizes") {
  auto sizes = [](std::size_t n, int k) {
    const auto fa = make_folds(n, k, 1);
    std::multiset<std::size_t> s;
    for (int f = 0; f < k; ++f) s.insert(fa.members(f).size());
    return s;
  };
  CHECK(sizes(10, 5) == std::multiset<std::size_t>{2, 2, 2, 2, 2});
  CHECK(sizes(11, 5) == std::multiset<std::size_t>{3, 2, 2, 2, 2});
  CHECK_THROWS_AS(make_folds(3, 5, 0), ValidationError);
  CHECK_THROWS_AS(make_folds(10, 1, 0), ValidationError);
}

TEST_CASE("folds: members and complement partition the records") {
  const auto fa = make_folds(37, 4, 9);
  for (int k = 0; k < 4; ++k) {
    auto m = fa.members(k);
    auto c = fa.complement(k);
    CHECK(m.size() + c.size() == 37);
    std::vector<std::size_t> all(m);
    all.insert(all.end(), c.begin(), c.end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  }
  CHECK(make_folds(100, 5, 1).fold != make_folds(100, 5, 2).fold);
  CHECK(make_folds(100, 5, 1).fold == make_folds(100, 5, 1).fold);
}

TEST_CASE("weighted_mean") {
  std::vector<double> v{1, 1}, w{0.5, 0.5};
  CHECK(weighted_mean(v, w) == 1.0);
  std::vector<double> v2{0, 1}, w2{1, 3};
  CHECK(weighted_mean(v2, w2) == 0.75);
  std::vector<double> v3{0.3, -1.2, 4.0, 2.5}, w3(4, 0.7);
  CHECK(weighted_mean(v3, w3) == doctest::Approx((0.3 - 1.2 + 4.0 + 2.5) / 4));
  std::vector<double> e;
  CHECK_THROWS_AS(weighted_mean(e, e), ValidationError);
}

TEST_CASE("partition: by modality and by quartile on car age") {
  const auto sample = sample_dataset(SyntheticDGP::blank(testing::default_schema()), 3000, 4);
  const auto& d = sample.data;
  const auto mods = partition(d, {GroupScheme::Kind::ByModality, "car_age"});
  CHECK(mods.size() == 12);
  const auto quarts = partition(d, {GroupScheme::Kind::ByQuartile, "car_age"});
  CHECK(quarts.size() == 4);

  std::size_t total = 0;
  for (const auto& g : quarts) total += g.indices.size();
  CHECK(total == d.size());
  // quartile groups are unions of whole modalities
  for (const auto& g : quarts) {
    std::set<int> codes;
    for (auto i : g.indices) codes.insert(d[i].covariates[0]);
    for (const auto& other : quarts) {
      if (&other == &g) continue;
      for (auto i : other.indices) CHECK(codes.count(d[i].covariates[0]) == 0);
    }
  }
  CHECK_THROWS_AS(partition(d, {GroupScheme::Kind::ByModality, "nope"}), ValidationError);
}

TEST_CASE("partition: one observed modality gives one group") {
  const auto s = make_schema({{"x", {1, 2, 3}}});
  const auto d = parse_csv("x,c,r,w\n2,0,0,1\n2,1,0,1\n2,0,1,1\n", s);
  CHECK(partition(d, {GroupScheme::Kind::ByModality, "x"}).size() == 1);
}

TEST_CASE("partition: predicted statistic with ties stays balanced") {
  const auto s = make_schema({{"x", {1, 2}}});
  std::vector<Record> recs(100, Record{{1}, 0, 0, 1.0});
  Dataset d(s, recs);
  GroupScheme scheme;
  scheme.kind = GroupScheme::Kind::ByPredictedStatistic;
  scheme.statistic.assign(100, 0.0);
  const auto groups = partition(d, scheme);
  REQUIRE(groups.size() == 4);
  for (const auto& g : groups) CHECK(g.indices.size() == 25);
  // ties broken by record index
  CHECK(groups[0].indices.front() == 0);
  CHECK(groups[3].indices.back() == 99);
}
