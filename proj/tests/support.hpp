#pragma once

// Helpers shared by the unit and acceptance tests. The oracles here evaluate
// the textbook formulas directly on probabilities and are deliberately written
// without reference to the library implementation.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adlift/features.hpp"
#include "adlift/ingest.hpp"
#include "adlift/synth.hpp"

namespace adlift::testing {

using CountMatrix = std::vector<std::vector<std::uint64_t>>;  // [level][label]

// One-factor table from a level x label count matrix.
inline FactorTable table_from(const CountMatrix& counts) {
  const std::vector<std::size_t> levels{counts.size()};
  FactorTable t(levels);
  std::uint64_t n = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    for (int s = 0; s < 2; ++s) {
      t.count(0, k, s) = counts[k][static_cast<std::size_t>(s)];
      n += counts[k][static_cast<std::size_t>(s)];
    }
  }
  t.set_total(n);
  return t;
}

struct Probabilities {
  std::vector<std::vector<double>> joint;
  std::vector<double> row, col;
};

inline Probabilities probabilities_of(const CountMatrix& counts) {
  double n = 0.0;
  for (const auto& r : counts) n += static_cast<double>(r[0] + r[1]);
  Probabilities p;
  p.col.assign(2, 0.0);
  for (const auto& r : counts) {
    std::vector<double> pr{static_cast<double>(r[0]) / n, static_cast<double>(r[1]) / n};
    p.row.push_back(pr[0] + pr[1]);
    p.col[0] += pr[0];
    p.col[1] += pr[1];
    p.joint.push_back(pr);
  }
  return p;
}

// Σ p log2(p / (p_row p_col)), 0 log 0 = 0.
inline double oracle_shannon(const CountMatrix& counts) {
  const auto p = probabilities_of(counts);
  double sum = 0.0;
  for (std::size_t k = 0; k < p.joint.size(); ++k) {
    for (std::size_t s = 0; s < 2; ++s) {
      const double pj = p.joint[k][s];
      if (pj > 0.0) sum += pj * std::log2(pj / (p.row[k] * p.col[s]));
    }
  }
  return sum;
}

// (1/(alpha-1)) log2 Σ p^alpha / (p_row^(alpha-1) p_col^(alpha-1)).
inline double oracle_renyi(const CountMatrix& counts, double alpha) {
  const auto p = probabilities_of(counts);
  double sum = 0.0;
  for (std::size_t k = 0; k < p.joint.size(); ++k) {
    for (std::size_t s = 0; s < 2; ++s) {
      const double pj = p.joint[k][s];
      if (pj > 0.0) sum += std::pow(pj, alpha) / (std::pow(p.row[k], alpha - 1.0) * std::pow(p.col[s], alpha - 1.0));
    }
  }
  return std::log2(sum) / (alpha - 1.0);
}

// Small fixed suite of 2-label tables with no empty cells.
inline std::vector<CountMatrix> table_suite() {
  return {
      {{30, 10}, {20, 40}},
      {{25, 25}, {25, 25}},
      {{49, 1}, {1, 49}},
      {{5, 7}, {11, 3}, {20, 2}},
      {{100, 3}, {90, 12}, {40, 40}, {7, 1}},
      {{1, 2}, {3, 4}},
  };
}

// Re-encodes records onto another dictionary by level label; labels the
// target does not know become kUnseenLevel.
inline std::vector<RequestRecord> remap(const ParsedRequests& source, const FactorDictionary& target) {
  std::vector<RequestRecord> out;
  out.reserve(source.records.size());
  for (const auto& r : source.records) {
    RequestRecord m;
    m.label = r.label;
    for (std::size_t i = 0; i < r.factors.size(); ++i) {
      const auto id = target.find(i, source.dictionary.level_label(i, r.factors[i]));
      m.factors.push_back(id ? *id : kUnseenLevel);
    }
    out.push_back(std::move(m));
  }
  return out;
}

// One planted factor with a log-odds shift on one of its two levels, plus
// `noise` factors with no effect.
inline RequestSpec planted_spec(std::size_t count, double effect, std::size_t noise, std::size_t planted_at) {
  RequestSpec spec;
  spec.count = count;
  spec.base_rate = 0.05;
  for (std::size_t j = 0; j <= noise; ++j) {
    FactorSpec f;
    f.name = "f" + std::to_string(j);
    if (j == planted_at) {
      f.probs = {0.5, 0.5};
      f.effects = {0.0, effect};
    } else {
      f.probs = {0.4, 0.3, 0.2, 0.1};
    }
    spec.factors.push_back(std::move(f));
  }
  return spec;
}

// 64-bit FNV-1a, for re-sealing deliberately edited files.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("adlift_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace adlift::testing
