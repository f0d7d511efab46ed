#include "pcdm/emd.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <cstdint>
#include <limits>
#include <string>

#include "pcdm/error.hpp"
#include "pcdm/parallel.hpp"

namespace pcdm {

namespace {

void check_histogram(const Histogram2D& h, const char* name) {
  if (h.size() == 0) throw ShapeError(std::string(name) + " is empty");
  if (!h.allFinite() || h.minCoeff() < 0.0) throw RangeError(std::string(name) + " must be finite and nonnegative");
}

void check_p(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw RangeError("p must lie in (0, 1], got " + std::to_string(p));
}

bool is_pow2(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

// Successive shortest paths on the bipartite supply/demand graph, dense
// Dijkstra with potentials. Supplies and demands are integers.
struct Transport {
  std::size_t m, n;
  std::vector<std::int64_t> supply, demand;
  std::vector<double> cost;       // m x n
  std::vector<std::int64_t> flow;  // m x n

  void solve() {
    const std::size_t V = m + n;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> pot(V, 0.0), dist(V);
    std::vector<std::ptrdiff_t> prev(V);
    std::vector<char> done(V);
    flow.assign(m * n, 0);
    for (;;) {
      std::fill(dist.begin(), dist.end(), inf);
      std::fill(prev.begin(), prev.end(), -1);
      std::fill(done.begin(), done.end(), 0);
      bool any = false;
      for (std::size_t i = 0; i < m; ++i)
        if (supply[i] > 0) {
          dist[i] = 0.0;
          any = true;
        }
      if (!any) return;
      std::ptrdiff_t target = -1;
      for (;;) {
        std::ptrdiff_t u = -1;
        for (std::size_t v = 0; v < V; ++v)
          if (!done[v] && dist[v] < inf && (u < 0 || dist[v] < dist[u])) u = static_cast<std::ptrdiff_t>(v);
        if (u < 0) break;
        done[u] = 1;
        if (static_cast<std::size_t>(u) >= m && demand[u - m] > 0) {
          target = u;
          break;
        }
        if (static_cast<std::size_t>(u) < m) {
          const std::size_t i = u;
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t v = m + j;
            if (done[v]) continue;
            const double rc = std::max(0.0, cost[i * n + j] + pot[i] - pot[v]);
            if (dist[u] + rc < dist[v]) {
              dist[v] = dist[u] + rc;
              prev[v] = u;
            }
          }
        } else {
          const std::size_t j = u - m;
          for (std::size_t i = 0; i < m; ++i) {
            if (done[i] || flow[i * n + j] == 0) continue;
            const double rc = std::max(0.0, -cost[i * n + j] + pot[u] - pot[i]);
            if (dist[u] + rc < dist[i]) {
              dist[i] = dist[u] + rc;
              prev[i] = u;
            }
          }
        }
      }
      if (target < 0) throw Error("emd_exact: transport problem is infeasible");
      const double dt = dist[target];
      for (std::size_t v = 0; v < V; ++v) pot[v] += done[v] ? dist[v] : dt;

      // Bottleneck along the path.
      std::int64_t amount = demand[target - m];
      std::ptrdiff_t v = target;
      while (prev[v] >= 0) {
        const std::ptrdiff_t u = prev[v];
        if (static_cast<std::size_t>(u) >= m) amount = std::min(amount, flow[v * n + (u - m)]);
        v = u;
      }
      amount = std::min(amount, supply[v]);
      supply[v] -= amount;
      demand[target - m] -= amount;
      v = target;
      while (prev[v] >= 0) {
        const std::ptrdiff_t u = prev[v];
        if (static_cast<std::size_t>(u) < m) {
          flow[u * n + (v - m)] += amount;
        } else {
          flow[v * n + (u - m)] -= amount;
        }
        v = u;
      }
    }
  }
};

}  // namespace

EmdResult emd_exact(const Histogram2D& x, const Histogram2D& y, double p) {
  check_p(p);
  check_histogram(x, "x");
  check_histogram(y, "y");
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw ShapeError("emd_exact: histogram shapes differ");
  if (x.size() > 256) throw ShapeError("emd_exact: grid has " + std::to_string(x.size()) + " cells, oracle limit is 256");
  const double tx = x.sum(), ty = y.sum(), tmax = std::max(tx, ty);
  if (std::abs(tx - ty) > 1e-9 * tmax) throw RangeError("emd_exact: total masses differ");

  const Eigen::Index W = x.cols();
  const std::size_t N = static_cast<std::size_t>(x.size());
  auto cell = [W](std::size_t k) { return std::pair<double, double>(double(k / W), double(k % W)); };
  auto at = [W](const Histogram2D& h, std::size_t k) { return h(static_cast<Eigen::Index>(k / W), static_cast<Eigen::Index>(k % W)); };

  EmdResult result;
  if (tmax == 0.0) return result;
  const double scale = 0x1.0p32 / tmax;

  // Common mass stays in place at zero cost; only the excess moves.
  std::vector<std::size_t> src, dst;
  std::vector<std::int64_t> supply, demand;
  for (std::size_t k = 0; k < N; ++k) {
    const double d = at(x, k) - at(y, k);
    const auto q = static_cast<std::int64_t>(std::llround(std::abs(d) * scale));
    if (q == 0) continue;
    if (d > 0) {
      src.push_back(k);
      supply.push_back(q);
    } else {
      dst.push_back(k);
      demand.push_back(q);
    }
  }
  std::int64_t ssum = 0, dsum = 0;
  for (auto v : supply) ssum += v;
  for (auto v : demand) dsum += v;
  // Rounding can leave a few units of imbalance; absorb them in the largest entry.
  if (ssum != dsum) {
    if (ssum > dsum) {
      auto it = std::max_element(supply.begin(), supply.end());
      *it -= ssum - dsum;
    } else {
      auto it = std::max_element(demand.begin(), demand.end());
      *it -= dsum - ssum;
    }
  }

  Transport tp;
  tp.m = src.size();
  tp.n = dst.size();
  tp.supply = supply;
  tp.demand = demand;
  tp.cost.resize(tp.m * tp.n);
  for (std::size_t i = 0; i < tp.m; ++i)
    for (std::size_t j = 0; j < tp.n; ++j) {
      const auto [a, b] = cell(src[i]);
      const auto [c, d] = cell(dst[j]);
      tp.cost[i * tp.n + j] = std::pow(std::hypot(a - c, b - d), p);
    }
  if (tp.m > 0 && tp.n > 0) tp.solve();

  long double cost = 0.0L;
  for (std::size_t k = 0; k < N; ++k) {
    const double common = std::min(at(x, k), at(y, k));
    if (common > 0) result.plan.flows.push_back({k, k, common});
  }
  for (std::size_t i = 0; i < tp.m; ++i)
    for (std::size_t j = 0; j < tp.n; ++j) {
      const std::int64_t f = tp.flow[i * tp.n + j];
      if (f == 0) continue;
      result.plan.flows.push_back({src[i], dst[j], static_cast<double>(f) / scale});
      cost += static_cast<long double>(f) * tp.cost[i * tp.n + j];
    }
  result.plan.cost = static_cast<double>(cost / scale);
  result.distance = std::pow(result.plan.cost, 1.0 / p);
  return result;
}

double emd_wavelet(const Histogram2D& x, const Histogram2D& y, double p, EmdVariant variant, EmdWorkspace* ws) {
  check_p(p);
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw ShapeError("emd_wavelet: histogram shapes differ");
  const Eigen::Index n = x.rows();
  if (n != x.cols() || !is_pow2(n)) throw ShapeError("emd_wavelet: grid must be square with power-of-two side");

  if (n == 1) return std::abs(x(0, 0) - y(0, 0));

  std::optional<EmdWorkspace> local;
  EmdWorkspace& w = ws ? *ws : local.emplace();
  const Eigen::Index h0 = n / 2;
  if (w.a.rows() < h0 || w.a.cols() < h0) w.a.resize(h0, h0);
  if (w.b.rows() < h0 || w.b.cols() < h0) w.b.resize(h0, h0);

  int S = 1;
  while ((Eigen::Index{1} << (S - 1)) < n) ++S;
  const double D = variant == EmdVariant::DimensionExponent ? 2.0 : static_cast<double>(n);
  // Level weights 2^(-s(p + D/2)), finest level first.
  const double e = p + D / 2.0;
  const bool whole = e == std::floor(e) && e < 256.0;
  const double step = whole ? std::ldexp(1.0, static_cast<int>(e)) : std::exp2(e);
  double weight = whole ? std::ldexp(1.0, -S * static_cast<int>(e)) : std::exp2(-S * e);

  // One Haar level on 2x2 blocks of src (or of src - sub), column-major.
  auto level = [](const double* src, const double* sub, Eigen::Index ld_src, Eigen::Index h, double* dst, Eigen::Index ld_dst) {
    double detail = 0.0;
    for (Eigen::Index j = 0; j < h; ++j) {
      const double* c0 = src + 2 * j * ld_src;
      const double* c1 = c0 + ld_src;
      double* out = dst + j * ld_dst;
      if (sub) {
        const double* s0 = sub + 2 * j * ld_src;
        const double* s1 = s0 + ld_src;
        for (Eigen::Index i = 0; i < h; ++i) {
          const double a = c0[2 * i] - s0[2 * i], c = c0[2 * i + 1] - s0[2 * i + 1];
          const double b = c1[2 * i] - s1[2 * i], d = c1[2 * i + 1] - s1[2 * i + 1];
          detail += std::abs(a - b - c + d) + std::abs(-a - b + c + d) + std::abs(-a + b - c + d);
          out[i] = 0.5 * (a + b + c + d);
        }
      } else {
        for (Eigen::Index i = 0; i < h; ++i) {
          const double a = c0[2 * i], c = c0[2 * i + 1];
          const double b = c1[2 * i], d = c1[2 * i + 1];
          detail += std::abs(a - b - c + d) + std::abs(-a - b + c + d) + std::abs(-a + b - c + d);
          out[i] = 0.5 * (a + b + c + d);
        }
      }
    }
    return detail;
  };

  double* cur = w.a.data();
  double* nxt = w.b.data();
  Eigen::Index ld_cur = w.a.rows(), ld_nxt = w.b.rows();
  double total = weight * 0.5 * level(x.data(), y.data(), n, h0, cur, ld_cur);
  weight *= step;
  for (Eigen::Index m = h0; m > 1; m /= 2) {
    total += weight * 0.5 * level(cur, nullptr, ld_cur, m / 2, nxt, ld_nxt);
    weight *= step;
    std::swap(cur, nxt);
    std::swap(ld_cur, ld_nxt);
  }
  return total + std::abs(cur[0]);
}

Histogram2D random_histogram(std::size_t n, Rng& rng) {
  Histogram2D h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < h.cols(); ++j)
    for (Eigen::Index i = 0; i < h.rows(); ++i) h(i, j) = rng.uniform();
  return h / h.sum();
}

RatioStats summarize_ratios(const std::vector<PairRecord>& records) {
  RatioStats st;
  st.min = std::numeric_limits<double>::infinity();
  st.max = 0.0;
  double sum = 0.0;
  for (const auto& r : records) {
    const bool exact_pos = r.exact > 0, sur_pos = r.surrogate > 0;
    if (exact_pos != sur_pos || !std::isfinite(r.ratio)) {
      ++st.sign_violations;
      continue;
    }
    st.min = std::min(st.min, r.ratio);
    st.max = std::max(st.max, r.ratio);
    sum += r.ratio;
    ++st.pairs;
  }
  st.mean = st.pairs ? sum / static_cast<double>(st.pairs) : 0.0;
  st.spread = st.pairs ? st.max / st.min : 0.0;
  if (!st.pairs) st.min = 0.0;
  return st;
}

RatioStats bound_suite(std::size_t n_pairs, std::size_t grid, double p, Rng& rng, EmdVariant variant,
                       std::vector<PairRecord>* records) {
  std::vector<Histogram2D> xs(n_pairs), ys(n_pairs);
  for (std::size_t k = 0; k < n_pairs; ++k) {
    xs[k] = random_histogram(grid, rng);
    ys[k] = random_histogram(grid, rng);
  }
  std::vector<PairRecord> out(n_pairs);
  parallel_for(n_pairs, [&](std::size_t k) {
    const double e = emd_exact(xs[k], ys[k], p).distance;
    const double s = emd_wavelet(xs[k], ys[k], p, variant);
    out[k] = {k, e, s, s > 0 ? e / s : std::numeric_limits<double>::quiet_NaN()};
  });
  // Identical pairs carry no ratio information.
  std::vector<PairRecord> kept;
  for (const auto& r : out)
    if (!(xs[r.id] == ys[r.id])) kept.push_back(r);
  if (records) *records = kept;
  return summarize_ratios(kept);
}

}  // namespace pcdm
