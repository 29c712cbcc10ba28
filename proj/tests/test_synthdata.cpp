#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gradsal/synthdata.hpp"

using namespace gradsal;

namespace {

constexpr ClassId A = 0, B = 1, C = 2;

/// Top-left pixel of the first region with exactly this membership.
std::pair<std::size_t, std::size_t> corner_of(const TemplateSet& t, std::uint32_t membership) {
  for (const auto& r : t.regions)
    if (r.membership == membership) return {r.top, r.left};
  throw std::logic_error("membership not in layout");
}

std::uint32_t bits(std::initializer_list<ClassId> cs) {
  std::uint32_t m = 0;
  for (ClassId c : cs) m |= class_bit(c);
  return m;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Templates, DefaultLayoutHas54OnesPerClass) {
  const TemplateSet t = build_templates(default_layout());
  ASSERT_EQ(t.num_classes(), 3);
  for (const auto& g : t.templates) {
    std::size_t ones = 0;
    for (double v : g.values()) {
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      ones += v == 1.0;
    }
    EXPECT_EQ(ones, 54u);
  }
  EXPECT_TRUE(is_reference_layout(t));
}

TEST(Templates, RegionCompositionPerClass) {
  const TemplateSet t = build_templates(default_layout());
  for (ClassId c = 0; c < 3; ++c) {
    int specific = 0, paired = 0, all = 0;
    for (const auto& r : t.regions) {
      if (!r.contains(c)) continue;
      const int n = std::popcount(r.membership);
      specific += n == 1;
      paired += n == 2;
      all += n == 3;
    }
    EXPECT_EQ(specific, 1);
    EXPECT_EQ(paired, 2);
    EXPECT_EQ(all, 3);
  }
}

TEST(Templates, UnionCoversEightyOnePixels) {
  const TemplateSet t = build_templates(default_layout());
  std::size_t active = 0;
  for (std::size_t i = 0; i < 1024; ++i) active += (t.templates[0][i] + t.templates[1][i] + t.templates[2][i]) > 0;
  EXPECT_EQ(active, 81u);
}

TEST(Templates, SharedRegionActiveInAllClasses) {
  const TemplateSet t = build_templates(default_layout());
  const auto [r, c] = corner_of(t, bits({A, B, C}));
  for (ClassId k = 0; k < 3; ++k) EXPECT_EQ(t.templates[static_cast<std::size_t>(k)].at(r + 1, c + 1), 1.0);
}

TEST(Templates, DefaultLayoutMarginsAndGaps) {
  const auto layout = default_layout();
  for (const auto& r : layout) {
    EXPECT_GE(r.top, 4u);
    EXPECT_GE(r.left, 4u);
    EXPECT_GE(32 - (r.top + 3), 4u);
    EXPECT_GE(32 - (r.left + 3), 4u);
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    for (std::size_t j = i + 1; j < layout.size(); ++j) {
      const auto& a = layout[i];
      const auto& b = layout[j];
      const bool same_row = a.top == b.top;
      const bool same_col = a.left == b.left;
      if (same_row) EXPECT_GE(std::max(a.left, b.left) - (std::min(a.left, b.left) + 3), 5u);
      if (same_col) EXPECT_GE(std::max(a.top, b.top) - (std::min(a.top, b.top) + 3), 5u);
    }
  }
}

TEST(Templates, InvalidLayoutsRaise) {
  auto layout = default_layout();
  layout[1].top = layout[0].top + 1;
  layout[1].left = layout[0].left + 1;
  EXPECT_THROW(build_templates(layout), std::invalid_argument);
  layout = default_layout();
  layout[0].left = 30;
  EXPECT_THROW(build_templates(layout), std::out_of_range);
  layout = default_layout();
  layout[0].membership = 0;
  EXPECT_THROW(build_templates(layout), std::invalid_argument);
  layout = default_layout();
  layout[0].membership = class_bit(5);
  EXPECT_THROW(build_templates(layout), std::invalid_argument);
}

TEST(Dataset, ZeroNoiseReproducesTemplates) {
  const TemplateSet t = build_templates(default_layout());
  RandomSource rng(1);
  const Dataset ds = generate_dataset(t, Split::train, 4, 0.0, rng);
  ASSERT_EQ(ds.size(), 12u);
  for (const auto& ex : ds.examples) EXPECT_EQ(ex.input, t.templates[static_cast<std::size_t>(ex.label)]);
}

TEST(Dataset, ClassMeanWithinCltBound) {
  const TemplateSet t = build_templates(default_layout());
  const Dataset ds = generate_split(t, Split::train, 1000, 0.5, 3);
  Grid mean_a(32, 32);
  std::size_t n = 0;
  for (const auto& ex : ds.examples) {
    if (ex.label != A) continue;
    mean_a += ex.input;
    ++n;
  }
  ASSERT_EQ(n, 1000u);
  mean_a *= 1.0 / 1000.0;
  // 0.05 is a three-sigma bound per pixel (sigma / sqrt(1000) = 0.0158), so about 0.3% of the
  // 1024 pixels are expected outside it; none should be beyond five sigma
  std::size_t outside = 0;
  for (std::size_t i = 0; i < 1024; ++i) {
    const double err = std::fabs(mean_a[i] - t.templates[0][i]);
    outside += err > 0.05;
    EXPECT_LT(err, 5.0 * 0.5 / std::sqrt(1000.0));
  }
  EXPECT_LE(outside, 10u);
}

TEST(Dataset, SeedAndSplitDeterminism) {
  const TemplateSet t = build_templates(default_layout());
  const Dataset a = generate_split(t, Split::test, 20, 0.5, 7);
  const Dataset b = generate_split(t, Split::test, 20, 0.5, 7);
  const Dataset other_split = generate_split(t, Split::train, 20, 0.5, 7);
  const Dataset other_seed = generate_split(t, Split::test, 20, 0.5, 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.examples[i].input, b.examples[i].input);
    EXPECT_EQ(a.examples[i].label, b.examples[i].label);
  }
  EXPECT_NE(a.examples[0].input, other_split.examples[0].input);
  EXPECT_NE(a.examples[0].input, other_seed.examples[0].input);
  // the test stream does not depend on how much the train stream drew
  const Dataset small_train = generate_split(t, Split::train, 5, 0.5, 7);
  (void)small_train;
  EXPECT_EQ(generate_split(t, Split::test, 20, 0.5, 7).examples[3].input, a.examples[3].input);
}

TEST(GroundTruthMaps, InformativeValues) {
  const TemplateSet t = build_templates(default_layout());
  const Grid a = informative_map(t, A);
  auto at = [&](std::initializer_list<ClassId> m) {
    const auto [r, c] = corner_of(t, bits(m));
    return a.at(r + 1, c + 1);
  };
  EXPECT_DOUBLE_EQ(at({A}), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(at({A, B, C}), 0.0);
  EXPECT_DOUBLE_EQ(at({B, C}), -2.0 / 3.0);
  EXPECT_DOUBLE_EQ(at({B}), -1.0 / 3.0);
  EXPECT_DOUBLE_EQ(at({A, B}), 1.0 / 3.0);
  double mx = -1;
  for (double v : a.values()) mx = std::max(mx, v);
  EXPECT_DOUBLE_EQ(mx, 2.0 / 3.0);
}

TEST(GroundTruthMaps, InformativeMapsSumToZeroExactly) {
  const TemplateSet t = build_templates(default_layout());
  const GroundTruth gt = ground_truth(t);
  const std::set<double> allowed{-2.0 / 3.0, -1.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0};
  Grid sum(32, 32);
  for (const auto& g : gt.informative) {
    sum += g;
    for (double v : g.values()) EXPECT_TRUE(allowed.count(v)) << v;
  }
  for (double v : sum.values()) EXPECT_EQ(v, 0.0);
}

TEST(GroundTruthMaps, PairwiseValuesAndAntisymmetry) {
  const TemplateSet t = build_templates(default_layout());
  const Grid ab = pairwise_difference_map(t, A, B);
  auto at = [&](std::initializer_list<ClassId> m) {
    const auto [r, c] = corner_of(t, bits(m));
    return ab.at(r + 1, c + 1);
  };
  EXPECT_EQ(at({B}), 1.0);
  EXPECT_EQ(at({B, C}), 1.0);
  EXPECT_EQ(at({A}), -1.0);
  EXPECT_EQ(at({A, C}), -1.0);
  EXPECT_EQ(at({A, B}), 0.0);
  EXPECT_EQ(at({A, B, C}), 0.0);
  EXPECT_EQ(ab.at(0, 0), 0.0);
  EXPECT_EQ(ab, -pairwise_difference_map(t, B, A));
  EXPECT_THROW(pairwise_difference_map(t, A, A), std::invalid_argument);
  const GroundTruth gt = ground_truth(t);
  EXPECT_EQ(gt.pairwise.size(), 6u);
  for (const auto& [st, g] : gt.pairwise)
    for (double v : g.values()) EXPECT_TRUE(v == -1.0 || v == 0.0 || v == 1.0);
}

TEST(GridFormat, DatasetRoundTripIsExact) {
  const TemplateSet t = build_templates(default_layout());
  const Dataset ds = generate_split(t, Split::validation, 3, 0.5, 11);
  const auto path = temp_path("gradsal_ds_test.gsds");
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.split, Split::validation);
  EXPECT_EQ(back.seed, 11u);
  EXPECT_EQ(back.num_classes, 3);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.examples[i].label, ds.examples[i].label);
    EXPECT_EQ(back.examples[i].input, ds.examples[i].input);
  }
}

TEST(GridFormat, CorruptFilesRaise) {
  const auto path = temp_path("gradsal_bad.gsds");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE0000";
  }
  EXPECT_THROW(load_dataset(path), FormatError);
  const TemplateSet t = build_templates(default_layout());
  save_dataset(generate_split(t, Split::train, 1, 0.5, 1), path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  EXPECT_THROW(load_dataset(path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_dataset(temp_path("gradsal_missing.gsds")), IoError);
}

TEST(GridFormat, SaliencyFileIsNotADataset) {
  GridFile f{RecordKind::saliency_maps, 2, 2, 3, Split::test, 0, {{1, 0, Grid(2, 2, 0.5)}}};
  const auto path = temp_path("gradsal_maps.gsds");
  write_grid_file(f, path);
  EXPECT_EQ(read_grid_file(path).records[0].values, Grid(2, 2, 0.5));
  EXPECT_THROW(load_dataset(path), FormatError);
  std::filesystem::remove(path);
}
