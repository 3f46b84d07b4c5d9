#pragma once

// Scalar probability kernels: the Weibull uniform-noise reparameterization
// and its partial derivatives, the analytic Weibull->gamma KL divergence (and
// the gamma->gamma one used by the gamma-encoder variants), a best-Weibull-fit
// search, the Marsaglia-Tsang shape-boosted gamma sampler with a recorded
// rejection trace so samples stay reparameterizable, Poisson log-mass, and the
// count samplers (CRT tables, multinomial allocation) used by the
// latent-count augmentation.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "whai/common.hpp"
#include "whai/rng.hpp"

namespace whai {

inline constexpr double kEulerGamma = 0.57721566490153286060651209;

struct WeibullParams {
  double shape = 1.0;  // k
  double scale = 1.0;  // lambda
};

// Rate parameterization throughout: mean = shape / rate.
struct GammaParams {
  double shape = 1.0;  // alpha
  double rate = 1.0;   // beta
};

inline void check_weibull(const WeibullParams& p) {
  require(p.shape > 0.0 && std::isfinite(p.shape), "Weibull shape must be positive");
  require(p.scale > 0.0 && std::isfinite(p.scale), "Weibull scale must be positive");
}

inline void check_gamma(const GammaParams& p) {
  require(p.shape > 0.0 && std::isfinite(p.shape), "gamma shape must be positive");
  require(p.rate > 0.0 && std::isfinite(p.rate), "gamma rate must be positive");
}

// ln(1 + e^x), saturating to the asymptotes outside |x| > 30 so it never
// underflows to zero or overflows.
inline double softplus(double x) {
  if (x > 30.0) return x + std::exp(-x);
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// d softplus / dx = logistic(x).
inline double softplus_grad(double x) {
  if (x > 30.0) return 1.0;
  if (x < -30.0) return std::exp(x);
  return 1.0 / (1.0 + std::exp(-x));
}

// ---------------------------------------------------------------------------
// Digamma / trigamma by upward recurrence into the asymptotic regime.
// ---------------------------------------------------------------------------

inline double digamma(double x) {
  require(x > 0.0, "digamma: argument must be positive");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x, inv2 = inv * inv;
  double series = std::log(x) - 0.5 * inv -
                  inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 -
                          inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
  return acc + series;
}

inline double trigamma(double x) {
  require(x > 0.0, "trigamma: argument must be positive");
  double acc = 0.0;
  while (x < 6.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  double inv = 1.0 / x, inv2 = inv * inv;
  double series = inv * (1.0 + 0.5 * inv +
                         inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 -
                                inv2 * (1.0 / 30.0)))));
  return acc + series;
}

// ---------------------------------------------------------------------------
// Weibull reparameterization: x = scale * (-ln(1 - eps))^(1/shape).
// ---------------------------------------------------------------------------

inline double weibull_sample(const WeibullParams& p, double eps) {
  check_weibull(p);
  require(eps > 0.0 && eps < 1.0, "weibull_sample: noise must lie strictly in (0,1)");
  double t = -std::log1p(-eps);
  return p.scale * std::pow(t, 1.0 / p.shape);
}

struct WeibullSampleGrad {
  double value = 0.0;
  double d_shape = 0.0;
  double d_scale = 0.0;
};

inline WeibullSampleGrad weibull_sample_grad(const WeibullParams& p, double eps) {
  WeibullSampleGrad g;
  g.value = weibull_sample(p, eps);
  double t = -std::log1p(-eps);
  g.d_scale = g.value / p.scale;                                // t^(1/k)
  g.d_shape = -g.value * std::log(t) / (p.shape * p.shape);     // -x ln t / k^2
  return g;
}

// mean = scale * Gamma(1 + 1/shape); evaluated in log space so small shapes
// degrade to +inf instead of NaN.
inline double weibull_mean(const WeibullParams& p) {
  check_weibull(p);
  return std::exp(std::log(p.scale) + std::lgamma(1.0 + 1.0 / p.shape));
}

// ---------------------------------------------------------------------------
// KL(Weibull(k, lambda) || Gamma(alpha, beta)), analytic.
//
// KL = -alpha ln lambda + gamma*alpha/k + ln k + beta*lambda*Gamma(1 + 1/k)
//      - gamma - 1 - alpha ln beta + ln Gamma(alpha)
// ---------------------------------------------------------------------------

inline double kl_weibull_gamma(const WeibullParams& q, const GammaParams& p) {
  check_weibull(q);
  check_gamma(p);
  double log_scale = std::log(q.scale);
  double mean_term = std::exp(std::log(p.rate) + log_scale + std::lgamma(1.0 + 1.0 / q.shape));
  return -p.shape * log_scale + kEulerGamma * p.shape / q.shape + std::log(q.shape) +
         mean_term - kEulerGamma - 1.0 - p.shape * std::log(p.rate) + std::lgamma(p.shape);
}

struct KlWeibullGammaGrad {
  double value = 0.0;
  double d_q_shape = 0.0;  // w.r.t. Weibull k
  double d_q_scale = 0.0;  // w.r.t. Weibull lambda
  double d_p_shape = 0.0;  // w.r.t. gamma alpha
  double d_p_rate = 0.0;   // w.r.t. gamma beta
};

inline KlWeibullGammaGrad kl_weibull_gamma_grad(const WeibullParams& q, const GammaParams& p) {
  KlWeibullGammaGrad g;
  g.value = kl_weibull_gamma(q, p);
  double k = q.shape, lam = q.scale, a = p.shape, b = p.rate;
  double one_plus = 1.0 + 1.0 / k;
  double gam1k = std::exp(std::lgamma(one_plus));  // Gamma(1 + 1/k)
  g.d_q_shape = -kEulerGamma * a / (k * k) + 1.0 / k - b * lam * gam1k * digamma(one_plus) / (k * k);
  g.d_q_scale = -a / lam + b * gam1k;
  g.d_p_shape = -std::log(lam) + kEulerGamma / k - std::log(b) + digamma(a);
  g.d_p_rate = lam * gam1k - a / b;
  return g;
}

// KL(Gamma(a1, b1) || Gamma(a2, b2)), both rate-parameterized.
inline double kl_gamma_gamma(const GammaParams& q, const GammaParams& p) {
  check_gamma(q);
  check_gamma(p);
  double a1 = q.shape, b1 = q.rate, a2 = p.shape, b2 = p.rate;
  return (a1 - a2) * digamma(a1) - std::lgamma(a1) + std::lgamma(a2) +
         a2 * (std::log(b1) - std::log(b2)) + a1 * (b2 - b1) / b1;
}

struct KlGammaGammaGrad {
  double value = 0.0;
  double d_q_shape = 0.0;
  double d_q_rate = 0.0;
  double d_p_shape = 0.0;
  double d_p_rate = 0.0;
};

inline KlGammaGammaGrad kl_gamma_gamma_grad(const GammaParams& q, const GammaParams& p) {
  KlGammaGammaGrad g;
  g.value = kl_gamma_gamma(q, p);
  double a1 = q.shape, b1 = q.rate, a2 = p.shape, b2 = p.rate;
  g.d_q_shape = (a1 - a2) * trigamma(a1) + (b2 - b1) / b1;
  g.d_q_rate = a2 / b1 - a1 * b2 / (b1 * b1);
  g.d_p_shape = digamma(a2) - digamma(a1) + std::log(b1) - std::log(b2);
  g.d_p_rate = -a2 / b2 + a1 / b1;
  return g;
}

// ---------------------------------------------------------------------------
// Best Weibull approximation of a gamma by KL descent in (ln k, ln lambda).
// ---------------------------------------------------------------------------

struct WeibullFit {
  WeibullParams params;
  double achieved_kl = 0.0;
  std::size_t iterations = 0;
};

inline WeibullFit weibull_fit_to_gamma(const GammaParams& target) {
  check_gamma(target);
  const double grad_tol = 1e-8;
  const std::size_t max_iter = 200000;

  double u = 0.5 * std::log(target.shape);  // ln k, init k = sqrt(alpha)
  // ln lambda, init mean-matched: lambda * Gamma(1 + 1/k) = alpha / beta.
  double w = std::log(target.shape / target.rate) - std::lgamma(1.0 + std::exp(-u));

  auto eval = [&](double lu, double lw) {
    return kl_weibull_gamma_grad({std::exp(lu), std::exp(lw)}, target);
  };

  KlWeibullGammaGrad g = eval(u, w);
  double step = 0.5;
  std::size_t iter = 0;
  for (; iter < max_iter; ++iter) {
    double gu = g.d_q_shape * std::exp(u);  // chain rule into log coordinates
    double gw = g.d_q_scale * std::exp(w);
    if (std::sqrt(gu * gu + gw * gw) < grad_tol) break;
    // Backtracking descent step.
    double nu = u - step * gu;
    double nw = w - step * gw;
    KlWeibullGammaGrad ng = eval(nu, nw);
    if (std::isfinite(ng.value) && ng.value <= g.value) {
      u = nu;
      w = nw;
      g = ng;
      step = std::min(step * 1.25, 4.0);
    } else {
      step *= 0.5;
      require(step > 1e-18, "weibull_fit_to_gamma: line search collapsed (pathological shape " +
                                std::to_string(target.shape) + ")");
    }
  }
  require(iter < max_iter, "weibull_fit_to_gamma: no convergence after iteration cap (shape " +
                               std::to_string(target.shape) + ")");
  WeibullFit fit;
  fit.params = {std::exp(u), std::exp(w)};
  fit.achieved_kl = g.value;
  fit.iterations = iter;
  return fit;
}

// ---------------------------------------------------------------------------
// Marsaglia-Tsang gamma sampler with shape boost B.
//
// Proposal ztilde = d * (1 + c*eps)^3 with d = alpha + B - 1/3, c = 1/sqrt(9d)
// targets Gamma(alpha + B, 1); accepted when v = (1+c*eps)^3 > 0 and
// ln u < 0.5 eps^2 + d - d v + d ln v. The boosted sample is brought down to
// shape alpha by z = ztilde * prod_i u_i^(1/(alpha+i-1)) / rate. The accepted
// eps and the B uniforms are recorded so z is a deterministic, differentiable
// function of (alpha, rate, trace).
// ---------------------------------------------------------------------------

struct GammaTrace {
  double eps = 0.0;          // accepted N(0,1) draw
  std::vector<double> us;    // B shape-reduction uniforms
};

struct GammaSample {
  double value = 0.0;
  GammaTrace trace;
};

inline double gamma_mt_ztilde(double boosted_shape, double eps) {
  double d = boosted_shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  double one_plus = 1.0 + c * eps;
  return d * one_plus * one_plus * one_plus;
}

// Default boost keeps the boosted shape >= 1 so acceptance is ~0.99.
inline int gamma_mt_default_boost(double alpha) {
  int b = static_cast<int>(std::ceil(1.0 - alpha)) + 4;
  return b > 0 ? b : 0;
}

inline double gamma_from_trace(const GammaParams& p, int boost, const GammaTrace& trace) {
  check_gamma(p);
  require(boost >= 0, "gamma sampler: boost must be nonnegative");
  require(p.shape + boost > 1.0 / 3.0, "gamma sampler: boosted shape must exceed 1/3");
  require(static_cast<int>(trace.us.size()) == boost, "gamma trace does not match boost");
  double z = gamma_mt_ztilde(p.shape + boost, trace.eps) / p.rate;
  for (int i = 1; i <= boost; ++i)
    z *= std::pow(trace.us[static_cast<std::size_t>(i - 1)], 1.0 / (p.shape + i - 1.0));
  return z;
}

inline GammaSample gamma_sample_mt(const GammaParams& p, int boost, Rng& rng) {
  check_gamma(p);
  require(boost >= 0, "gamma sampler: boost must be nonnegative");
  require(p.shape + boost > 1.0 / 3.0, "gamma sampler: boosted shape must exceed 1/3");
  double d = p.shape + boost - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  GammaSample out;
  for (;;) {
    double eps = rng.normal();
    double one_plus = 1.0 + c * eps;
    double v = one_plus * one_plus * one_plus;
    if (v <= 0.0) continue;
    double u = rng.uniform01();
    if (std::log(u) < 0.5 * eps * eps + d - d * v + d * std::log(v)) {
      out.trace.eps = eps;
      break;
    }
  }
  out.trace.us.resize(static_cast<std::size_t>(boost));
  for (auto& u : out.trace.us) u = rng.uniform01();
  out.value = gamma_from_trace(p, boost, out.trace);
  return out;
}

struct GammaTraceGrad {
  double value = 0.0;
  double d_shape = 0.0;
  double d_rate = 0.0;
};

// Derivatives of the replayed sample through the accepted proposal and the
// uniform shape-reduction factors; the acceptance decision itself is treated
// as fixed.
inline GammaTraceGrad gamma_trace_grad(const GammaParams& p, int boost, const GammaTrace& trace) {
  GammaTraceGrad g;
  double d = p.shape + boost - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  double one_plus = 1.0 + c * trace.eps;
  double v = one_plus * one_plus * one_plus;
  double ztilde = d * v;
  double dc_dshape = -4.5 * c * c * c;
  double dztilde = v + d * 3.0 * one_plus * one_plus * trace.eps * dc_dshape;

  double reduction = 1.0;       // prod u_i^(1/(alpha+i-1))
  double dlog_reduction = 0.0;  // d ln(reduction) / d alpha
  for (int i = 1; i <= boost; ++i) {
    double expo = 1.0 / (p.shape + i - 1.0);
    double lu = std::log(trace.us[static_cast<std::size_t>(i - 1)]);
    reduction *= std::exp(expo * lu);
    dlog_reduction -= lu * expo * expo;
  }

  g.value = ztilde * reduction / p.rate;
  g.d_shape = (dztilde * reduction + ztilde * reduction * dlog_reduction) / p.rate;
  g.d_rate = -g.value / p.rate;
  return g;
}

// ---------------------------------------------------------------------------
// Count kernels.
// ---------------------------------------------------------------------------

inline double poisson_logpmf(std::int64_t x, double rate) {
  require(x >= 0, "poisson_logpmf: count must be nonnegative");
  require(rate >= 0.0 && std::isfinite(rate), "poisson_logpmf: rate must be finite nonnegative");
  if (rate == 0.0) {
    // 0*ln 0 := 0; positive count under zero rate is impossible, signalled
    // by -inf rather than a thrown fault.
    return x == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(x) * std::log(rate) - rate - std::lgamma(static_cast<double>(x) + 1.0);
}

// Chinese restaurant table count: sum_{i=1..m} Bernoulli(r / (r + i - 1)).
inline std::int64_t crt_sample(std::int64_t m, double r, Rng& rng) {
  require(m >= 0, "crt_sample: customer count must be nonnegative");
  require(r > 0.0 && std::isfinite(r), "crt_sample: concentration must be positive");
  std::int64_t tables = 0;
  for (std::int64_t i = 1; i <= m; ++i) {
    if (rng.uniform01() < r / (r + static_cast<double>(i - 1))) ++tables;
  }
  return tables;
}

// Multinomial(total, weights / sum(weights)) by inverse-CDF per trial.
inline std::vector<std::int64_t> multinomial_allocate(std::int64_t total,
                                                      std::span<const double> weights,
                                                      Rng& rng) {
  require(total >= 0, "multinomial_allocate: total must be nonnegative");
  std::vector<std::int64_t> out(weights.size(), 0);
  if (total == 0) return out;
  std::vector<double> cum(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    require(weights[i] >= 0.0 && std::isfinite(weights[i]),
            "multinomial_allocate: weights must be finite nonnegative");
    acc += weights[i];
    cum[i] = acc;
  }
  require(acc > 0.0, "multinomial_allocate: all weights are zero with positive total");
  for (std::int64_t t = 0; t < total; ++t) {
    double u = rng.uniform01() * acc;
    std::size_t idx =
        static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (idx >= out.size()) idx = out.size() - 1;
    // Skip zero-weight bins the float search may have landed on.
    while (weights[idx] == 0.0 && idx + 1 < out.size()) ++idx;
    while (weights[idx] == 0.0 && idx > 0) --idx;
    ++out[idx];
  }
  return out;
}

}  // namespace whai
