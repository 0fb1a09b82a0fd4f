#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "certgate/config.hpp"
#include "certgate/errors.hpp"
#include "certgate/harness.hpp"
#include "certgate/rng.hpp"

namespace certgate {

// Separable multimodal benchmark: global minimum 0 at the origin,
// roughly 10^d local minima on the integer lattice.
inline double rastrigin(std::span<const double> x) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  double f = 10.0 * static_cast<double>(x.size());
  for (double xi : x) {
    f += xi * xi - 10.0 * std::cos(two_pi * xi);
  }
  return f;
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix, a = V D V^T.
// Deterministic sweep order; plenty fast for the dimensions used here.
// Column j of vecs is the eigenvector for vals[j].
inline void jacobi_eigen(std::size_t n, std::vector<double> a,
                         std::vector<double>& vecs,
                         std::vector<double>& vals) {
  vecs.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) vecs[i * n + i] = 1.0;

  const auto at = [&](std::size_t i, std::size_t j) -> double& {
    return a[i * n + j];
  };

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    }
    if (off <= 1e-26) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        const double tau = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        const double app = at(p, p), aqq = at(q, q);
        at(p, p) = app - t * apq;
        at(q, q) = aqq + t * apq;
        at(p, q) = 0.0;
        at(q, p) = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          const double aip = at(i, p), aiq = at(i, q);
          at(i, p) = c * aip - s * aiq;
          at(p, i) = at(i, p);
          at(i, q) = s * aip + c * aiq;
          at(q, i) = at(i, q);
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = vecs[i * n + p], viq = vecs[i * n + q];
          vecs[i * n + p] = c * vip - s * viq;
          vecs[i * n + q] = s * vip + c * viq;
        }
      }
    }
  }

  vals.resize(n);
  for (std::size_t i = 0; i < n; ++i) vals[i] = at(i, i);
}

}  // namespace detail

struct CmaesParams {
  std::size_t dim = 2;
  double sigma0 = 0.5;
  std::size_t popsize = 16;
  std::size_t budget_evals = 2000;

  void validate() const {
    if (dim < 1) throw InvalidArgument("cmaes: dim must be >= 1");
    if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) {
      throw InvalidArgument("cmaes: sigma0 must be > 0");
    }
    if (popsize < 2) throw InvalidArgument("cmaes: popsize must be >= 2");
    if (budget_evals < popsize) {
      throw InvalidArgument("cmaes: budget must cover one generation");
    }
  }
};

// Covariance matrix adaptation evolution strategy with rank-based
// recombination weights and cumulative step-size control, standard
// constants throughout. Minimizes rastrigin from a seeded uniform start
// in the central region [-1, 1]^dim and returns the best value seen
// within the evaluation budget. Fully deterministic in (params, seed).
//
// The central start puts the score distribution in a nearly
// deterministic micro-gain regime: the optimizer's job is to exploit
// the central basin cluster, and small step-size reductions yield
// small, certifiable improvements in the best value found.
inline double cmaes_run(const CmaesParams& params, std::uint64_t seed,
                        std::vector<double>* best_per_gen = nullptr) {
  params.validate();
  const std::size_t n = params.dim;
  const std::size_t lambda = params.popsize;
  const std::size_t mu = lambda / 2;
  const double nd = static_cast<double>(n);

  std::vector<double> weights(mu);
  for (std::size_t i = 0; i < mu; ++i) {
    weights[i] = std::log((static_cast<double>(lambda) + 1.0) / 2.0) -
                 std::log(static_cast<double>(i + 1));
  }
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& w : weights) w /= wsum;
  double wsq = 0.0;
  for (double w : weights) wsq += w * w;
  const double mueff = 1.0 / wsq;

  const double cs = (mueff + 2.0) / (nd + mueff + 5.0);
  const double ds =
      1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (nd + 1.0)) - 1.0) +
      cs;
  const double cc = (4.0 + mueff / nd) / (nd + 4.0 + 2.0 * mueff / nd);
  const double c1 = 2.0 / ((nd + 1.3) * (nd + 1.3) + mueff);
  const double cmu =
      std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) /
                             ((nd + 2.0) * (nd + 2.0) + mueff));
  const double chi_n =
      std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

  CounterRng rng(mix_key(seed, fnv1a64("cmaes")));

  std::vector<double> mean(n);
  for (double& m : mean) m = rng.next_uniform(-1.0, 1.0);
  double sigma = params.sigma0;
  std::vector<double> cov(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) cov[i * n + i] = 1.0;
  std::vector<double> ps(n, 0.0), pc(n, 0.0);

  std::vector<double> basis, eigvals, dstd(n);
  std::vector<std::vector<double>> zs(lambda, std::vector<double>(n));
  std::vector<std::vector<double>> ys(lambda, std::vector<double>(n));
  std::vector<double> x(n), fitness(lambda);
  std::vector<std::size_t> order(lambda);

  double best = std::numeric_limits<double>::infinity();
  const std::size_t generations = params.budget_evals / lambda;

  for (std::size_t gen = 0; gen < generations; ++gen) {
    detail::jacobi_eigen(n, cov, basis, eigvals);
    for (std::size_t i = 0; i < n; ++i) {
      dstd[i] = std::sqrt(std::max(eigvals[i], 1e-20));
    }

    for (std::size_t k = 0; k < lambda; ++k) {
      for (std::size_t i = 0; i < n; ++i) zs[k][i] = rng.next_gaussian();
      for (std::size_t i = 0; i < n; ++i) {
        double yi = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          yi += basis[i * n + j] * dstd[j] * zs[k][j];
        }
        ys[k][i] = yi;
        x[i] = mean[i] + sigma * yi;
      }
      fitness[k] = rastrigin(x);
      best = std::min(best, fitness[k]);
    }
    if (best_per_gen != nullptr) best_per_gen->push_back(best);

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return fitness[a] < fitness[b];
                     });

    std::vector<double> yw(n, 0.0), zw(n, 0.0);
    for (std::size_t i = 0; i < mu; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        yw[j] += weights[i] * ys[order[i]][j];
        zw[j] += weights[i] * zs[order[i]][j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) mean[j] += sigma * yw[j];

    // ps update uses C^{-1/2} yw, which equals B zw for y = B D z.
    for (std::size_t i = 0; i < n; ++i) {
      double bzi = 0.0;
      for (std::size_t j = 0; j < n; ++j) bzi += basis[i * n + j] * zw[j];
      ps[i] = (1.0 - cs) * ps[i] +
              std::sqrt(cs * (2.0 - cs) * mueff) * bzi;
    }
    double ps_norm = 0.0;
    for (double v : ps) ps_norm += v * v;
    ps_norm = std::sqrt(ps_norm);

    const double expo = 2.0 * static_cast<double>(gen + 1);
    const bool hsig =
        ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs, expo)) / chi_n <
        1.4 + 2.0 / (nd + 1.0);

    for (std::size_t i = 0; i < n; ++i) {
      pc[i] = (1.0 - cc) * pc[i] +
              (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) * yw[i] : 0.0);
    }

    const double c_decay =
        1.0 - c1 - cmu + (hsig ? 0.0 : c1 * cc * (2.0 - cc));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double v = c_decay * cov[i * n + j] + c1 * pc[i] * pc[j];
        for (std::size_t w = 0; w < mu; ++w) {
          v += cmu * weights[w] * ys[order[w]][i] * ys[order[w]][j];
        }
        cov[i * n + j] = v;
        cov[j * n + i] = v;
      }
    }

    sigma *= std::exp((cs / ds) * (ps_norm / chi_n - 1.0));
  }

  return best;
}

// Adapter that scores optimizer hyperparameters: a configuration names
// sigma0 and popsize, the score is the negated best objective value so
// higher is better. Common random numbers across configs on the same
// seed keep paired differences tight.
class CmaesHarness final : public Harness {
 public:
  CmaesHarness(std::size_t dim, std::size_t budget_evals, double delta_lo,
               double delta_hi, std::uint64_t salt)
      : dim_(dim),
        budget_(budget_evals),
        lo_(delta_lo),
        hi_(delta_hi),
        salt_(salt) {
    if (!(lo_ < hi_)) {
      throw InvalidArgument("cmaes harness: requires delta_lo < delta_hi");
    }
  }

  double evaluate(const Configuration& config, std::int64_t seed,
                  Stage) const override {
    CmaesParams p;
    p.dim = dim_;
    p.budget_evals = budget_;
    try {
      p.sigma0 = param_as_real(config.at("sigma0"));
      p.popsize = static_cast<std::size_t>(
          std::get<std::int64_t>(config.at("popsize")));
      p.validate();
    } catch (const Error& e) {
      throw HarnessError(std::string("cmaes harness: bad config: ") +
                         e.what());
    } catch (const std::bad_variant_access&) {
      throw HarnessError("cmaes harness: popsize must be an integer");
    }
    const std::uint64_t run_seed =
        mix_key(salt_, static_cast<std::uint64_t>(seed));
    return -cmaes_run(p, run_seed);
  }

  double delta_lo() const override { return lo_; }
  double delta_hi() const override { return hi_; }
  double bound_delta(double raw) const override {
    return std::clamp(raw, lo_, hi_);
  }

 private:
  std::size_t dim_;
  std::size_t budget_;
  double lo_, hi_;
  std::uint64_t salt_;
};

}  // namespace certgate
