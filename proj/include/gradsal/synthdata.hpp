#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gradsal/checkpoint.hpp"
#include "gradsal/models.hpp"
#include "gradsal/numerics.hpp"

namespace gradsal {

/// Square activation region; `membership` is a bitmask over class ids.
struct RegionSpec {
  std::size_t top = 0;
  std::size_t left = 0;
  std::uint32_t membership = 0;

  bool contains(ClassId c) const { return (membership >> c) & 1U; }
};

struct TemplateSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t region_size = 0;
  std::vector<RegionSpec> regions;
  std::vector<Grid> templates;  // one per class

  int num_classes() const { return static_cast<int>(templates.size()); }
};

inline constexpr std::uint32_t class_bit(ClassId c) { return 1U << c; }

/// Three classes A, B, C on a 32x32 grid: regions of 3x3 on a 3x3 lattice at offsets 5, 14, 23
/// (margins 5/6, gaps 6). Each class gets one specific, two pairwise-shared and three common regions.
inline std::vector<RegionSpec> default_layout() {
  constexpr std::uint32_t A = class_bit(0), B = class_bit(1), C = class_bit(2);
  constexpr std::size_t o[3] = {5, 14, 23};
  return {
      {o[0], o[0], A},         {o[0], o[1], A | B}, {o[0], o[2], B},
      {o[1], o[0], A | C},     {o[1], o[1], A | B | C}, {o[1], o[2], B | C},
      {o[2], o[0], A | B | C}, {o[2], o[1], C},     {o[2], o[2], A | B | C},
  };
}

inline TemplateSet build_templates(const std::vector<RegionSpec>& layout, std::size_t height = 32,
                                   std::size_t width = 32, std::size_t region_size = 3,
                                   int num_classes = 3) {
  if (num_classes < 2 || num_classes > 32) throw std::invalid_argument("num_classes must be in [2, 32]");
  if (region_size == 0) throw std::invalid_argument("region_size must be positive");
  const std::uint32_t valid_bits = num_classes == 32 ? ~0U : (1U << num_classes) - 1U;
  Grid owner(height, width, -1.0);
  for (std::size_t r = 0; r < layout.size(); ++r) {
    const auto& reg = layout[r];
    if (reg.membership == 0) throw std::invalid_argument("region " + std::to_string(r) + " has no classes");
    if ((reg.membership & ~valid_bits) != 0) {
      throw std::invalid_argument("region " + std::to_string(r) + " names an unknown class");
    }
    if (reg.top + region_size > height || reg.left + region_size > width) {
      throw std::out_of_range("region " + std::to_string(r) + " extends outside the grid");
    }
    for (std::size_t i = reg.top; i < reg.top + region_size; ++i)
      for (std::size_t j = reg.left; j < reg.left + region_size; ++j) {
        if (owner.at(i, j) >= 0.0) {
          throw std::invalid_argument("region " + std::to_string(r) + " overlaps region " +
                                      std::to_string(static_cast<int>(owner.at(i, j))));
        }
        owner.at(i, j) = static_cast<double>(r);
      }
  }
  TemplateSet set{height, width, region_size, layout, {}};
  for (ClassId c = 0; c < num_classes; ++c) {
    Grid t(height, width);
    for (const auto& reg : layout) {
      if (!reg.contains(c)) continue;
      for (std::size_t i = reg.top; i < reg.top + region_size; ++i)
        for (std::size_t j = reg.left; j < reg.left + region_size; ++j) t.at(i, j) = 1.0;
    }
    set.templates.push_back(std::move(t));
  }
  return set;
}

/// True when a three-class layout has exactly one region per non-empty class subset, with the
/// full subset repeated three times ({A},{B},{C},{AB},{AC},{BC},{ABC}x3).
inline bool is_reference_layout(const TemplateSet& set) {
  if (set.num_classes() != 3) return false;
  std::map<std::uint32_t, int> counts;
  for (const auto& r : set.regions) ++counts[r.membership];
  const std::map<std::uint32_t, int> expected{{1, 1}, {2, 1}, {4, 1}, {3, 1}, {5, 1}, {6, 1}, {7, 3}};
  return counts == expected;
}

enum class Split : std::uint32_t { train = 0, validation = 1, test = 2 };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unknown";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

struct Dataset {
  Split split = Split::train;
  std::uint64_t seed = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  int num_classes = 0;
  std::vector<LabeledExample> examples;

  std::size_t size() const { return examples.size(); }
  Batch inputs() const { return to_batch(examples); }
  std::vector<ClassId> labels() const { return labels_of(examples); }
};

/// Class-major ordering: all examples of class 0, then class 1, ...
inline Dataset generate_dataset(const TemplateSet& templates, Split split, std::size_t n_per_class,
                                double sigma, RandomSource& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("generate_dataset: sigma must be >= 0");
  Dataset ds{split, rng.seed(), templates.height, templates.width, templates.num_classes(), {}};
  ds.examples.reserve(n_per_class * templates.templates.size());
  for (ClassId c = 0; c < templates.num_classes(); ++c) {
    const Grid& t = templates.templates[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < n_per_class; ++i) {
      ds.examples.push_back({t + sample_gaussian_grid(rng, t.height(), t.width(), sigma), c});
    }
  }
  return ds;
}

/// Seeds each split from its own sub-stream so splits never share noise.
inline Dataset generate_split(const TemplateSet& templates, Split split, std::size_t n_per_class,
                              double sigma, std::uint64_t seed) {
  RandomSource rng = RandomSource(seed).derive("data").derive(to_string(split));
  Dataset ds = generate_dataset(templates, split, n_per_class, sigma, rng);
  ds.seed = seed;
  return ds;
}

inline Grid average_template(const TemplateSet& templates) {
  Grid avg(templates.height, templates.width);
  for (const auto& t : templates.templates) avg += t;
  return avg * (1.0 / static_cast<double>(templates.templates.size()));
}

/// Class informative activation map: template_c minus the average template.
inline Grid informative_map(const TemplateSet& templates, ClassId c) {
  if (c < 0 || c >= templates.num_classes()) throw std::out_of_range("invalid class id");
  // Sum the other templates and subtract once so the K maps cancel exactly for K = 3.
  const auto k = static_cast<double>(templates.num_classes());
  Grid out(templates.height, templates.width);
  const Grid& own = templates.templates[static_cast<std::size_t>(c)];
  for (std::size_t i = 0; i < out.size(); ++i) {
    double others = 0.0;
    for (ClassId o = 0; o < templates.num_classes(); ++o)
      if (o != c) others += templates.templates[static_cast<std::size_t>(o)][i];
    out[i] = ((k - 1.0) * own[i] - others) / k;
  }
  return out;
}

/// Pairwise class activation difference map: template_target minus template_source.
inline Grid pairwise_difference_map(const TemplateSet& templates, ClassId source, ClassId target) {
  if (source == target) throw std::invalid_argument("pairwise map needs distinct classes");
  if (source < 0 || target < 0 || source >= templates.num_classes() || target >= templates.num_classes()) {
    throw std::out_of_range("invalid class id");
  }
  return templates.templates[static_cast<std::size_t>(target)] -
         templates.templates[static_cast<std::size_t>(source)];
}

struct GroundTruth {
  std::vector<Grid> informative;                           // by class
  std::map<std::pair<ClassId, ClassId>, Grid> pairwise;    // (source, target)
};

inline GroundTruth ground_truth(const TemplateSet& templates) {
  GroundTruth gt;
  for (ClassId c = 0; c < templates.num_classes(); ++c) gt.informative.push_back(informative_map(templates, c));
  for (ClassId s = 0; s < templates.num_classes(); ++s)
    for (ClassId t = 0; t < templates.num_classes(); ++t)
      if (s != t) gt.pairwise.emplace(std::pair{s, t}, pairwise_difference_map(templates, s, t));
  return gt;
}

// ---------------------------------------------------------------------------
// Binary grid-record file (".gsds"): little-endian.
//   header: "GSDS" u32 version u32 kind u32 height u32 width u32 num_classes u32 split u64 seed u64 count
//   record: i32 label, i32 source_index, f64[height*width] row-major
// kind 0 holds examples (label = true class); kind 1 holds saliency maps (label = target class,
// source_index = example index in the originating dataset).

enum class RecordKind : std::uint32_t { examples = 0, saliency_maps = 1 };

struct GridRecord {
  ClassId label = 0;
  std::int32_t source_index = 0;
  Grid values;
};

struct GridFile {
  RecordKind kind = RecordKind::examples;
  std::size_t height = 0;
  std::size_t width = 0;
  int num_classes = 0;
  Split split = Split::train;
  std::uint64_t seed = 0;
  std::vector<GridRecord> records;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFU);
  out.write(b, 4);
}
inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFU);
  out.write(b, 8);
}
inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated grid file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated grid file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void write_grid_file(const GridFile& file, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("GSDS", 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(file.kind));
  detail::put_u32(out, static_cast<std::uint32_t>(file.height));
  detail::put_u32(out, static_cast<std::uint32_t>(file.width));
  detail::put_u32(out, static_cast<std::uint32_t>(file.num_classes));
  detail::put_u32(out, static_cast<std::uint32_t>(file.split));
  detail::put_u64(out, file.seed);
  detail::put_u64(out, file.records.size());
  for (const auto& rec : file.records) {
    if (rec.values.height() != file.height || rec.values.width() != file.width) {
      throw ShapeError("record shape does not match file header");
    }
    detail::put_u32(out, static_cast<std::uint32_t>(rec.label));
    detail::put_u32(out, static_cast<std::uint32_t>(rec.source_index));
    for (double v : rec.values.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw IoError("failed writing " + path);
}

inline GridFile read_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "GSDS") throw FormatError(path + " is not a grid file");
  if (detail::get_u32(in) != 1) throw FormatError(path + ": unsupported grid file version");
  GridFile file;
  const auto kind = detail::get_u32(in);
  if (kind > 1) throw FormatError(path + ": unknown record kind");
  file.kind = static_cast<RecordKind>(kind);
  file.height = detail::get_u32(in);
  file.width = detail::get_u32(in);
  file.num_classes = static_cast<int>(detail::get_u32(in));
  const auto split = detail::get_u32(in);
  if (split > 2) throw FormatError(path + ": unknown split");
  file.split = static_cast<Split>(split);
  file.seed = detail::get_u64(in);
  const auto count = detail::get_u64(in);
  const std::size_t pixels = file.height * file.width;
  file.records.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t r = 0; r < count; ++r) {
    GridRecord rec;
    rec.label = static_cast<ClassId>(static_cast<std::int32_t>(detail::get_u32(in)));
    rec.source_index = static_cast<std::int32_t>(detail::get_u32(in));
    if (rec.label < 0 || rec.label >= file.num_classes) throw FormatError(path + ": label out of range");
    std::vector<double> values(pixels);
    for (auto& v : values) v = std::bit_cast<double>(detail::get_u64(in));
    rec.values = Grid(file.height, file.width, std::move(values));
    file.records.push_back(std::move(rec));
  }
  return file;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  GridFile file{RecordKind::examples, ds.height, ds.width, ds.num_classes, ds.split, ds.seed, {}};
  file.records.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    file.records.push_back({ds.examples[i].label, static_cast<std::int32_t>(i), ds.examples[i].input});
  }
  write_grid_file(file, path);
}

inline Dataset load_dataset(const std::string& path) {
  GridFile file = read_grid_file(path);
  if (file.kind != RecordKind::examples) throw FormatError(path + " holds saliency maps, not examples");
  Dataset ds{file.split, file.seed, file.height, file.width, file.num_classes, {}};
  ds.examples.reserve(file.records.size());
  for (auto& rec : file.records) ds.examples.push_back({std::move(rec.values), rec.label});
  return ds;
}

}  // namespace gradsal
