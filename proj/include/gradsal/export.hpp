#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "gradsal/checkpoint.hpp"
#include "gradsal/evaluation.hpp"
#include "gradsal/numerics.hpp"

namespace gradsal {

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_sha256(const std::string& path) { return sha256_hex(read_file(path)); }

/// 8-bit grayscale raster.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

/// Symmetric diverging scale: 0 -> mid gray (128), +-scale -> 255 / 0, where scale is the given
/// percentile of |map|. An all-zero map renders uniformly mid-gray.
inline GrayImage render_map(const Grid& map, double percentile_of_abs = 99.9999, std::size_t upscale = 1) {
  if (!map.all_finite()) throw std::invalid_argument("cannot render a map with non-finite values");
  if (upscale == 0) throw std::invalid_argument("upscale must be >= 1");
  std::vector<double> mags(map.size());
  std::transform(map.values().begin(), map.values().end(), mags.begin(), [](double v) { return std::fabs(v); });
  const double scale = map.empty() ? 0.0 : percentile(std::move(mags), percentile_of_abs);
  GrayImage img{map.height() * upscale, map.width() * upscale, {}};
  img.pixels.resize(img.height * img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const double v = map.at(r / upscale, c / upscale);
      const double u = scale > 0.0 ? std::clamp(v / scale, -1.0, 1.0) : 0.0;
      img.pixels[r * img.width + c] = static_cast<std::uint8_t>(std::lround(127.5 + 127.5 * u));
    }
  }
  return img;
}

inline void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("failed writing image " + path);
}

inline void export_map_image(const Grid& map, const std::string& path, double percentile_of_abs = 99.9999,
                             std::size_t upscale = 1) {
  write_pgm(render_map(map, percentile_of_abs, upscale), path);
}

/// Tiles of independently scaled maps laid out row by row; empty grids leave a blank (mid-gray) tile.
inline GrayImage tile_maps(const std::vector<std::vector<Grid>>& rows, double percentile_of_abs,
                           std::size_t upscale, std::size_t gap = 2) {
  std::size_t th = 0, tw = 0, cols = 0;
  for (const auto& row : rows) {
    cols = std::max(cols, row.size());
    for (const auto& g : row) {
      th = std::max(th, g.height());
      tw = std::max(tw, g.width());
    }
  }
  th *= upscale;
  tw *= upscale;
  GrayImage img{rows.size() * (th + gap) + gap, cols * (tw + gap) + gap, {}};
  img.pixels.assign(img.height * img.width, 255);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const Grid& g = rows[i][j];
      const std::size_t top = gap + i * (th + gap);
      const std::size_t left = gap + j * (tw + gap);
      if (g.empty()) {
        for (std::size_t r = 0; r < th; ++r)
          for (std::size_t c = 0; c < tw; ++c) img.pixels[(top + r) * img.width + left + c] = 128;
        continue;
      }
      const GrayImage tile = render_map(g, percentile_of_abs, upscale);
      for (std::size_t r = 0; r < tile.height; ++r)
        for (std::size_t c = 0; c < tile.width; ++c)
          img.pixels[(top + r) * img.width + left + c] = tile.pixels[r * tile.width + c];
    }
  }
  return img;
}

inline std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string criterion_name(int c) { return c == 1 ? "class_informative" : "pairwise_difference"; }

inline int criterion_from_name(const std::string& s) {
  if (s == "class_informative") return 1;
  if (s == "pairwise_difference") return 2;
  throw FormatError("unknown criterion '" + s + "'");
}

/// method,criterion,mean_r,stderr,n ; criterion 1 rows first, methods in report order.
inline std::string scores_csv(const EvaluationReport& rep) {
  std::ostringstream os;
  os << "method,criterion,mean_r,stderr,n\n";
  for (int c : {1, 2}) {
    for (const auto& s : rep.scores(c)) {
      os << s.method << ',' << criterion_name(c) << ',' << format_real(s.mean) << ','
         << format_real(s.standard_error) << ',' << s.correlations.size() << '\n';
    }
  }
  return os.str();
}

/// method_a,method_b,criterion,t,df,p,p_adj ; every ordered pair (a != b).
inline std::string pairwise_csv(const EvaluationReport& rep) {
  std::ostringstream os;
  os << "method_a,method_b,criterion,t,df,p,p_adj\n";
  for (const auto& t : rep.tests) {
    os << rep.methods[t.method_a] << ',' << rep.methods[t.method_b] << ',' << criterion_name(t.criterion) << ','
       << format_real(t.result.t_statistic) << ',' << t.result.degrees_of_freedom << ','
       << format_real(t.result.p_value) << ',' << format_real(t.result.p_adjusted) << '\n';
  }
  return os.str();
}

inline void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

inline void export_scores_csv(const EvaluationReport& rep, const std::string& path) {
  write_text(scores_csv(rep), path);
}

inline void export_pairwise_csv(const EvaluationReport& rep, const std::string& path) {
  write_text(pairwise_csv(rep), path);
}

struct ScoreRow {
  std::string method;
  int criterion = 1;
  double mean_r = 0.0;
  double standard_error = 0.0;
  std::size_t n = 0;
};

inline std::vector<ScoreRow> parse_scores_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "method,criterion,mean_r,stderr,n") {
    throw FormatError("scores CSV header mismatch");
  }
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw FormatError("scores CSV row needs 5 fields: " + line);
    rows.push_back({f[0], criterion_from_name(f[1]), std::stod(f[2]), std::stod(f[3]),
                    static_cast<std::size_t>(std::stoull(f[4]))});
  }
  return rows;
}

}  // namespace gradsal
