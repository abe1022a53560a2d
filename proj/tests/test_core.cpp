#include <doctest.h>

#include <set>

#include "volfuse/core_types.hpp"
#include "volfuse/rng.hpp"
#include "support.hpp"

using namespace volfuse;

TEST_CASE("cdr ratings accept exactly the four legal values") {
  CHECK(cdr_from_value(0.0) == CdrRating::kZero);
  CHECK(cdr_from_value(0.5) == CdrRating::kHalf);
  CHECK(cdr_from_value(1.0) == CdrRating::kOne);
  CHECK(cdr_from_value(2.0) == CdrRating::kTwo);
  // Tolerant to parse noise, not to different ratings.
  CHECK(cdr_from_value(0.5 + 1e-12) == CdrRating::kHalf);
  CHECK_THROWS_AS(cdr_from_value(0.3), InvalidLabelError);
  CHECK_THROWS_AS(cdr_from_value(1.5), InvalidLabelError);
  CHECK_THROWS_AS(cdr_from_value(3.0), InvalidLabelError);
  CHECK_THROWS_AS(cdr_from_value(-0.5), InvalidLabelError);
  for (CdrRating r : {CdrRating::kZero, CdrRating::kHalf, CdrRating::kOne, CdrRating::kTwo}) {
    CHECK(cdr_from_value(cdr_value(r)) == r);
  }
}

TEST_CASE("binary label mapping: zero is control, anything greater is demented") {
  CHECK(map_cdr_to_binary(CdrRating::kZero).value == BinaryLabel::kNonDemented);
  CHECK(map_cdr_to_binary(CdrRating::kZero).fine_grained == FineLabel::kNonDemented);
  CHECK(map_cdr_to_binary(CdrRating::kHalf).value == BinaryLabel::kDemented);
  CHECK(map_cdr_to_binary(CdrRating::kHalf).fine_grained == FineLabel::kVeryMild);
  CHECK(map_cdr_to_binary(CdrRating::kOne).value == BinaryLabel::kDemented);
  CHECK(map_cdr_to_binary(CdrRating::kOne).fine_grained == FineLabel::kMild);
  CHECK(map_cdr_to_binary(CdrRating::kTwo).value == BinaryLabel::kDemented);
  CHECK(map_cdr_to_binary(CdrRating::kTwo).fine_grained == FineLabel::kModerate);
}

TEST_CASE("a 135/70/28/2 cohort collapses to 135 control and 100 demented") {
  const int fine_counts[4] = {135, 70, 28, 2};
  int binary[2] = {0, 0};
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < fine_counts[c]; ++i) {
      const auto label = map_cdr_to_binary(static_cast<CdrRating>(c));
      ++binary[static_cast<int>(label.value)];
    }
  }
  CHECK(binary[0] == 135);
  CHECK(binary[1] == 100);
}

TEST_CASE("modality names parse case-insensitively and round-trip") {
  CHECK(modality_from_string("t1") == Modality::kT1);
  CHECK(modality_from_string("T1") == Modality::kT1);
  CHECK(modality_from_string("gm") == Modality::kGm);
  CHECK(modality_from_string("Wm") == Modality::kWm);
  CHECK(modality_from_string("CSF") == Modality::kCsf);
  CHECK_THROWS_AS(modality_from_string("pet"), ParseError);
  for (Modality m : {Modality::kT1, Modality::kGm, Modality::kWm, Modality::kCsf}) {
    CHECK(modality_from_string(to_string(m)) == m);
  }
}

TEST_CASE("subject record validation rejects broken fields") {
  SubjectRecord r;
  r.subject_id = "sub-0001";
  r.age = 70.0;
  CHECK_NOTHROW(validate(r));

  SubjectRecord no_id = r;
  no_id.subject_id = "";
  CHECK_THROWS_AS(validate(no_id), Error);

  SubjectRecord bad_age = r;
  bad_age.age = 0.0;
  CHECK_THROWS_AS(validate(bad_age), Error);

  SubjectRecord bad_mmse = r;
  bad_mmse.mmse = 31.0;
  CHECK_THROWS_AS(validate(bad_mmse), Error);
  bad_mmse.mmse = -1.0;
  CHECK_THROWS_AS(validate(bad_mmse), Error);
}

TEST_CASE("volume grid indexing is x-fastest") {
  VolumeGrid g = make_volume({3, 4, 5});
  CHECK(g.voxels.size() == 60);
  CHECK(g.index(0, 0, 0) == 0);
  CHECK(g.index(1, 0, 0) == 1);
  CHECK(g.index(0, 1, 0) == 3);
  CHECK(g.index(0, 0, 1) == 12);
  CHECK(g.index(2, 3, 4) == 59);

  VolumeGrid bad = g;
  bad.voxels.pop_back();
  CHECK_THROWS_AS(validate(bad), Error);
  VolumeGrid bad_spacing = g;
  bad_spacing.spacing = {1.0, 0.0, 1.0};
  CHECK_THROWS_AS(validate(bad_spacing), Error);
}

TEST_CASE("cohort summary aggregates per fine class") {
  SUBCASE("empty cohort gives an empty table") {
    CHECK(cohort_summary({}).empty());
  }
  SUBCASE("one class, three records") {
    std::vector<SubjectRecord> records;
    for (double age : {60.0, 70.0, 80.0}) {
      SubjectRecord r;
      r.subject_id = "s" + std::to_string(static_cast<int>(age));
      r.cdr = CdrRating::kHalf;
      r.age = age;
      records.push_back(r);
    }
    const auto rows = cohort_summary(records);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].fine == FineLabel::kVeryMild);
    CHECK(rows[0].count == 3);
    CHECK(rows[0].mean_age == doctest::Approx(70.0));
    CHECK_FALSE(rows[0].mean_mmse.has_value());
  }
  SUBCASE("rows come out in ascending cdr order with sex and mmse counts") {
    auto records = volfuse::testing::synthetic_records(2, 3);
    records[0].mmse = 30.0;
    records[1].mmse = 28.0;
    const auto rows = cohort_summary(records);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].cdr == CdrRating::kZero);
    CHECK(rows[0].count == 2);
    CHECK(rows[0].mmse_count == 2);
    CHECK(rows[0].mean_mmse.value() == doctest::Approx(29.0));
    CHECK(rows[1].cdr == CdrRating::kHalf);
    CHECK(rows[1].count == 3);
    CHECK(rows[0].n_male + rows[0].n_female == 2);
    const std::string table = format_cohort_summary(rows);
    CHECK(table.find("0.5") != std::string::npos);
  }
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));

  Rng c(derive_seed(42, 7));
  Rng d(42);
  CHECK(c.next_u64() != d.next_u64());
}

TEST_CASE("rng distributions stay in range") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const std::uint64_t k = rng.below(13);
    CHECK(k < 13);
  }
  // Shuffle is a permutation and is seed-deterministic.
  std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8}, v2 = v1;
  Rng s1(3), s2(3);
  s1.shuffle(v1);
  s2.shuffle(v2);
  CHECK(v1 == v2);
  CHECK(std::set<int>(v1.begin(), v1.end()).size() == 8);
}
