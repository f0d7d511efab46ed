#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

#include "pcdm/rng.hpp"

namespace pcdm {

/// Nonnegative masses on an H x W pixel grid.
using Histogram2D = Eigen::MatrixXd;

struct Flow {
  std::size_t from;  // row-major cell index in x
  std::size_t to;    // row-major cell index in y
  double mass;
};

struct TransportPlan {
  std::vector<Flow> flows;
  double cost = 0.0;  // sum of flow * distance^p
};

struct EmdResult {
  double distance = 0.0;  // cost^(1/p)
  TransportPlan plan;
};

/// Exact W_p between equal-mass histograms with ground cost
/// ||(i,j) - (k,l)||^p, by successive shortest paths on integer masses.
EmdResult emd_exact(const Histogram2D& x, const Histogram2D& y, double p = 1.0);

enum class EmdVariant { DimensionExponent, PaperLiteral };

/// Scratch buffers for emd_wavelet; reusing one keeps the call allocation free.
struct EmdWorkspace {
  Eigen::MatrixXd a, b;
};

/// ||z1||_1 + sum_{s>=2} 2^(-s(p + D/2)) ||z^(s)||_1 over the full Haar
/// decomposition of x - y. D = 2, or the side length for PaperLiteral.
double emd_wavelet(const Histogram2D& x, const Histogram2D& y, double p = 1.0,
                   EmdVariant variant = EmdVariant::DimensionExponent, EmdWorkspace* ws = nullptr);

struct RatioStats {
  double min = 0, max = 0, mean = 0, spread = 0;
  std::size_t pairs = 0;
  std::size_t sign_violations = 0;  // pairs where exact and surrogate disagree on being zero/positive
};

struct PairRecord {
  std::size_t id;
  double exact;
  double surrogate;
  double ratio;
};

/// Random unit-mass histogram on an n x n grid.
Histogram2D random_histogram(std::size_t n, Rng& rng);

RatioStats bound_suite(std::size_t n_pairs, std::size_t grid, double p, Rng& rng,
                       EmdVariant variant = EmdVariant::DimensionExponent, std::vector<PairRecord>* records = nullptr);

RatioStats summarize_ratios(const std::vector<PairRecord>& records);

}  // namespace pcdm
