#ifndef SONOKIN_GPR_HPP
#define SONOKIN_GPR_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sonokin/binio.hpp"
#include "sonokin/common.hpp"
#include "sonokin/rng.hpp"

namespace sonokin {

enum class KernelFamily { RationalQuadratic, PolynomialDegree2 };

inline const char* kernel_family_name(KernelFamily f) {
  return f == KernelFamily::RationalQuadratic ? "rational_quadratic" : "polynomial_degree2";
}

/// Kernel hyperparameters. Positivity is enforced by keeping the optimizer in
/// log-space; the stored values here are the plain (exponentiated) ones.
struct KernelSpec {
  KernelFamily family = KernelFamily::RationalQuadratic;
  // RationalQuadratic
  double signal_variance = 1.0;  // sigma_f^2
  double length_scale = 1.0;     // l
  double shape = 1.0;            // alpha
  // PolynomialDegree2
  double bias = 1.0;  // sigma_0^2
  // shared
  double noise_variance = 0.1;  // sigma_n^2

  std::vector<double> to_log_params() const {
    if (family == KernelFamily::RationalQuadratic)
      return {std::log(signal_variance), std::log(length_scale), std::log(shape),
              std::log(noise_variance)};
    return {std::log(bias), std::log(length_scale), std::log(noise_variance)};
  }

  static KernelSpec from_log_params(KernelFamily family, const std::vector<double>& p) {
    KernelSpec s;
    s.family = family;
    if (family == KernelFamily::RationalQuadratic) {
      s.signal_variance = std::exp(p.at(0));
      s.length_scale = std::exp(p.at(1));
      s.shape = std::exp(p.at(2));
      s.noise_variance = std::exp(p.at(3));
    } else {
      s.bias = std::exp(p.at(0));
      s.length_scale = std::exp(p.at(1));
      s.noise_variance = std::exp(p.at(2));
    }
    return s;
  }
};

/// Kernel value between two points; the observation noise term is not included.
inline double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& x2) {
  if (x.size() != x2.size())
    fail(ErrorCode::DimensionMismatch, "kernel arguments of dimension " +
                                           std::to_string(x.size()) + " vs " +
                                           std::to_string(x2.size()));
  if (spec.family == KernelFamily::RationalQuadratic) {
    const double r2 = (x - x2).squaredNorm();
    return spec.signal_variance *
           std::pow(1.0 + r2 / (2.0 * spec.shape * spec.length_scale * spec.length_scale),
                    -spec.shape);
  }
  const double d = spec.bias + x.dot(x2) / (spec.length_scale * spec.length_scale);
  return d * d;
}

namespace detail {

/// Gram matrix with exact symmetry (lower triangle computed, mirrored up).
inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  if (spec.family == KernelFamily::RationalQuadratic) {
    const Eigen::VectorXd sq = X.rowwise().squaredNorm();
    const double denom = 2.0 * spec.shape * spec.length_scale * spec.length_scale;
    Eigen::MatrixXd G = X * X.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double r2 = std::max(0.0, sq(i) + sq(j) - 2.0 * G(i, j));
        const double v = spec.signal_variance * std::pow(1.0 + r2 / denom, -spec.shape);
        K(i, j) = v;
        K(j, i) = v;
      }
    }
  } else {
    const double inv_l2 = 1.0 / (spec.length_scale * spec.length_scale);
    Eigen::MatrixXd G = X * X.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double d = spec.bias + G(i, j) * inv_l2;
        K(i, j) = d * d;
        K(j, i) = d * d;
      }
    }
  }
  return K;
}

inline Eigen::MatrixXd cross_gram(const KernelSpec& spec, const Eigen::MatrixXd& Q,
                                  const Eigen::MatrixXd& X) {
  if (Q.cols() != X.cols())
    fail(ErrorCode::DimensionMismatch, "query dimension " + std::to_string(Q.cols()) +
                                           " vs training dimension " + std::to_string(X.cols()));
  if (spec.family == KernelFamily::RationalQuadratic) {
    const double denom = 2.0 * spec.shape * spec.length_scale * spec.length_scale;
    Eigen::MatrixXd D2 = (-2.0 * Q * X.transpose());
    D2.colwise() += Q.rowwise().squaredNorm();
    D2.rowwise() += X.rowwise().squaredNorm().transpose();
    return spec.signal_variance *
           (1.0 + D2.cwiseMax(0.0).array() / denom).pow(-spec.shape).matrix();
  }
  const double inv_l2 = 1.0 / (spec.length_scale * spec.length_scale);
  Eigen::MatrixXd G = Q * X.transpose() * inv_l2;
  return (G.array() + spec.bias).square().matrix();
}

}  // namespace detail

enum class TargetKind { KneeAngle, KneeVelocity };

inline const char* target_name(TargetKind t) {
  return t == TargetKind::KneeAngle ? "knee_angle" : "knee_velocity";
}

struct GprModel {
  KernelSpec kernel;
  Eigen::MatrixXd training_inputs;  // standardized feature rows
  TargetKind target = TargetKind::KneeAngle;
  double target_mean = 0.0;
  double target_sd = 1.0;               // floored
  Eigen::MatrixXd chol;                 // lower-triangular L, L L^T = K + sn2 I + jitter I
  Eigen::VectorXd dual_weights;         // (K + sn2 I)^-1 y_standardized
  Eigen::VectorXd standardized_targets; // kept for the marginal-likelihood term
  double jitter_used = 0.0;
};

constexpr double kTargetSdFloor = 1e-12;

/// Cholesky fit with an escalating jitter ladder (0, 1e-10, 1e-8, 1e-6 x mean diagonal).
inline GprModel fit_gpr(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                        const KernelSpec& spec, TargetKind target = TargetKind::KneeAngle) {
  if (inputs.rows() < 2)
    fail(ErrorCode::TooFewRows, "GPR fit needs >= 2 rows, got " + std::to_string(inputs.rows()));
  if (targets.size() != inputs.rows())
    fail(ErrorCode::LengthMismatch, "targets length != input rows");
  if (!targets.allFinite())
    fail(ErrorCode::DegenerateTargets, "targets contain NaN or Inf");

  GprModel model;
  model.kernel = spec;
  model.target = target;
  model.training_inputs = inputs;
  model.target_mean = targets.mean();
  const double var =
      (targets.array() - model.target_mean).square().sum() / static_cast<double>(targets.size());
  model.target_sd = std::max(std::sqrt(var), kTargetSdFloor);
  model.standardized_targets = (targets.array() - model.target_mean) / model.target_sd;

  Eigen::MatrixXd K = detail::gram_matrix(spec, inputs);
  K.diagonal().array() += spec.noise_variance;
  const double mean_diag = K.diagonal().mean();

  const double ladder[] = {0.0, 1e-10, 1e-8, 1e-6};
  bool ok = false;
  for (double factor : ladder) {
    Eigen::MatrixXd Kj = K;
    const double jitter = factor * mean_diag;
    Kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      model.chol = llt.matrixL();
      model.jitter_used = jitter;
      ok = true;
      break;
    }
  }
  if (!ok)
    fail(ErrorCode::NotPositiveDefinite,
         "Gram matrix not positive definite after max jitter (n=" +
             std::to_string(inputs.rows()) + ")");

  // (K + sn2 I + jitter I) w = y_std via two triangular solves
  Eigen::VectorXd tmp =
      model.chol.triangularView<Eigen::Lower>().solve(model.standardized_targets);
  model.dual_weights =
      model.chol.transpose().triangularView<Eigen::Upper>().solve(tmp);
  return model;
}

/// Predictive mean in target units; optionally the predictive variance
/// (target units squared, floored at zero, noise term not added).
inline Eigen::VectorXd predict_mean(const GprModel& model, const Eigen::MatrixXd& queries,
                                    Eigen::VectorXd* variance_out = nullptr) {
  Eigen::MatrixXd Kq = detail::cross_gram(model.kernel, queries, model.training_inputs);
  Eigen::VectorXd mean =
      (model.target_mean + (model.target_sd * (Kq * model.dual_weights).array())).matrix();
  if (variance_out) {
    variance_out->resize(queries.rows());
    const double k_self =
        model.kernel.family == KernelFamily::RationalQuadratic
            ? model.kernel.signal_variance
            : 0.0;  // recomputed per query for the polynomial kernel below
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
      Eigen::VectorXd v = model.chol.triangularView<Eigen::Lower>().solve(Kq.row(i).transpose());
      double kqq = k_self;
      if (model.kernel.family == KernelFamily::PolynomialDegree2) {
        Eigen::VectorXd q = queries.row(i);
        kqq = kernel_eval(model.kernel, q, q);
      }
      (*variance_out)(i) =
          std::max(0.0, kqq - v.squaredNorm()) * model.target_sd * model.target_sd;
    }
  }
  return mean;
}

/// -1/2 y^T w - sum_i log L_ii - (N/2) log 2 pi, on the standardized targets.
inline double log_marginal_likelihood(const GprModel& model) {
  const double n = static_cast<double>(model.standardized_targets.size());
  const double data_term = -0.5 * model.standardized_targets.dot(model.dual_weights);
  const double det_term = -model.chol.diagonal().array().log().sum();
  return data_term + det_term - 0.5 * n * std::log(2.0 * 3.14159265358979323846);
}

// ---------------------------------------------------------------------------
// Hyperparameter optimization: Nelder-Mead over log-parameters
// ---------------------------------------------------------------------------

struct GprOptimConfig {
  int max_iterations = 200;
  double relative_tolerance = 1e-6;
  int restarts = 3;
  std::uint64_t seed = 0;
  double initial_step = 0.7;  // simplex edge in log-space
};

namespace detail {

template <typename F>
std::pair<std::vector<double>, double> nelder_mead(F&& objective,
                                                   const std::vector<double>& start,
                                                   int max_iterations, double rel_tol,
                                                   double step) {
  const std::size_t n = start.size();
  struct Vertex {
    std::vector<double> x;
    double f;
  };
  std::vector<Vertex> simplex;
  simplex.reserve(n + 1);
  simplex.push_back({start, objective(start)});
  for (std::size_t i = 0; i < n; ++i) {
    auto x = start;
    x[i] += step;
    simplex.push_back({x, objective(x)});
  }
  auto by_f = [](const Vertex& a, const Vertex& b) { return a.f < b.f; };

  for (int iter = 0; iter < max_iterations; ++iter) {
    std::sort(simplex.begin(), simplex.end(), by_f);
    const double fbest = simplex.front().f;
    const double fworst = simplex.back().f;
    if (std::abs(fworst - fbest) <= rel_tol * (std::abs(fbest) + 1e-12)) break;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i].x[k];
    }
    for (auto& c : centroid) c /= static_cast<double>(n);

    auto blend = [&](double coeff) {
      std::vector<double> x(n);
      for (std::size_t k = 0; k < n; ++k)
        x[k] = centroid[k] + coeff * (simplex.back().x[k] - centroid[k]);
      return x;
    };

    auto reflected = blend(-1.0);
    double fr = objective(reflected);
    if (fr < simplex.front().f) {
      auto expanded = blend(-2.0);
      double fe = objective(expanded);
      simplex.back() = fe < fr ? Vertex{expanded, fe} : Vertex{reflected, fr};
    } else if (fr < simplex[n - 1].f) {
      simplex.back() = {reflected, fr};
    } else {
      auto contracted = blend(fr < simplex.back().f ? -0.5 : 0.5);
      double fc = objective(contracted);
      if (fc < std::min(fr, simplex.back().f)) {
        simplex.back() = {contracted, fc};
      } else {
        // shrink toward the best vertex
        for (std::size_t i = 1; i <= n; ++i) {
          for (std::size_t k = 0; k < n; ++k)
            simplex[i].x[k] = simplex[0].x[k] + 0.5 * (simplex[i].x[k] - simplex[0].x[k]);
          simplex[i].f = objective(simplex[i].x);
        }
      }
    }
  }
  std::sort(simplex.begin(), simplex.end(), by_f);
  return {simplex.front().x, simplex.front().f};
}

}  // namespace detail

/// Maximizes the log marginal likelihood over log-hyperparameters with seeded
/// deterministic restarts. Returns the best spec found; restarts whose fits fail
/// are skipped rather than fatal.
inline KernelSpec optimize_hyperparameters(const Eigen::MatrixXd& inputs,
                                           const Eigen::VectorXd& targets,
                                           KernelFamily family, const GprOptimConfig& config,
                                           std::optional<KernelSpec> init = std::nullopt) {
  if (inputs.rows() < 5)
    fail(ErrorCode::TooFewRows,
         "hyperparameter search needs >= 5 rows, got " + std::to_string(inputs.rows()));

  KernelSpec start_spec = init.value_or([&] {
    KernelSpec s;
    s.family = family;
    s.signal_variance = 1.0;
    s.length_scale = family == KernelFamily::RationalQuadratic
                         ? std::sqrt(static_cast<double>(inputs.cols()))
                         : 1.0;
    s.shape = 1.0;
    s.bias = 1.0;
    s.noise_variance = 0.1;
    return s;
  }());
  start_spec.family = family;

  auto objective = [&](const std::vector<double>& log_params) -> double {
    KernelSpec s = KernelSpec::from_log_params(family, log_params);
    try {
      GprModel m = fit_gpr(inputs, targets, s);
      const double lml = log_marginal_likelihood(m);
      if (!std::isfinite(lml)) return 1e100;
      return -lml;
    } catch (const Error&) {
      return 1e100;
    }
  };

  // restart 1 is a canonical noise-explains-all start; without it the search
  // can stall on the tiny-length-scale ridge that mimics iid noise
  KernelSpec noise_start = start_spec;
  noise_start.signal_variance = 1e-4;
  noise_start.bias = 1e-4;
  noise_start.noise_variance = 1.0;

  std::vector<double> best_x = start_spec.to_log_params();
  double best_f = objective(best_x);
  for (int r = 0; r < config.restarts; ++r) {
    std::vector<double> x0;
    if (r == 0) {
      x0 = start_spec.to_log_params();
    } else if (r == 1) {
      x0 = noise_start.to_log_params();
    } else {
      x0 = start_spec.to_log_params();
      Rng rng(Rng::derive_seed(config.seed, 0x6F70, static_cast<std::uint64_t>(r)));
      for (auto& v : x0) v += rng.uniform(-2.0, 2.0);
    }
    auto [x, f] = detail::nelder_mead(objective, x0, config.max_iterations,
                                      config.relative_tolerance, config.initial_step);
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }
  if (best_f >= 1e100)
    fail(ErrorCode::NotPositiveDefinite, "every hyperparameter restart failed to fit");
  return KernelSpec::from_log_params(family, best_x);
}

// ---------------------------------------------------------------------------
// Model serialization: "USGP" magic, version, params, inputs, dual weights,
// CRC-32 of the payload. Loading refuses other versions or corrupt payloads.
// ---------------------------------------------------------------------------

constexpr std::uint16_t kModelFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_model(const GprModel& model) {
  std::vector<std::uint8_t> payload;
  payload.push_back(model.kernel.family == KernelFamily::RationalQuadratic ? 0 : 1);
  payload.push_back(model.target == TargetKind::KneeAngle ? 0 : 1);
  auto log_params = model.kernel.to_log_params();
  payload.push_back(static_cast<std::uint8_t>(log_params.size()));
  for (double p : log_params) put_f64(payload, p);
  put_f64(payload, model.target_mean);
  put_f64(payload, model.target_sd);
  put_f64(payload, model.jitter_used);
  put_u32(payload, static_cast<std::uint32_t>(model.training_inputs.rows()));
  put_u32(payload, static_cast<std::uint32_t>(model.training_inputs.cols()));
  for (Eigen::Index i = 0; i < model.training_inputs.rows(); ++i)
    for (Eigen::Index j = 0; j < model.training_inputs.cols(); ++j)
      put_f64(payload, model.training_inputs(i, j));
  for (Eigen::Index i = 0; i < model.dual_weights.size(); ++i)
    put_f64(payload, model.dual_weights(i));

  std::vector<std::uint8_t> blob;
  blob.insert(blob.end(), {'U', 'S', 'G', 'P'});
  put_u16(blob, kModelFormatVersion);
  put_u32(blob, crc32(payload.data(), payload.size()));
  put_u64(blob, payload.size());
  blob.insert(blob.end(), payload.begin(), payload.end());
  return blob;
}

inline GprModel deserialize_model(const std::vector<std::uint8_t>& blob) {
  ByteReader r(blob.data(), blob.size());
  if (r.remaining() < 4 || std::memcmp(r.bytes(4), "USGP", 4) != 0)
    fail(ErrorCode::MagicMismatch, "bad model magic, expected USGP");
  const std::uint16_t version = r.u16();
  if (version != kModelFormatVersion)
    fail(ErrorCode::FormatVersionMismatch,
         "model format version " + std::to_string(version) + ", expected " +
             std::to_string(kModelFormatVersion));
  const std::uint32_t expected_crc = r.u32();
  const std::uint64_t payload_size = r.u64();
  if (r.remaining() != payload_size)
    fail(ErrorCode::TruncatedFrameData, "model payload size mismatch");
  const std::uint8_t* payload = r.bytes(payload_size);
  if (crc32(payload, payload_size) != expected_crc)
    fail(ErrorCode::ChecksumMismatch, "model payload checksum mismatch");

  ByteReader p(payload, payload_size);
  GprModel model;
  const KernelFamily family =
      p.u8() == 0 ? KernelFamily::RationalQuadratic : KernelFamily::PolynomialDegree2;
  model.target = p.u8() == 0 ? TargetKind::KneeAngle : TargetKind::KneeVelocity;
  const std::uint8_t n_params = p.u8();
  std::vector<double> log_params(n_params);
  for (auto& v : log_params) v = p.f64();
  model.kernel = KernelSpec::from_log_params(family, log_params);
  model.target_mean = p.f64();
  model.target_sd = p.f64();
  const double jitter = p.f64();
  const std::uint32_t rows = p.u32();
  const std::uint32_t cols = p.u32();
  model.training_inputs.resize(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) model.training_inputs(i, j) = p.f64();
  model.dual_weights.resize(rows);
  for (std::uint32_t i = 0; i < rows; ++i) model.dual_weights(i) = p.f64();

  // Rebuild the factor; the stored jitter is applied directly rather than
  // re-running the ladder so the reconstruction matches the original fit.
  Eigen::MatrixXd K = detail::gram_matrix(model.kernel, model.training_inputs);
  K.diagonal().array() += model.kernel.noise_variance + jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::NotPositiveDefinite, "stored model fails to refactorize");
  model.chol = llt.matrixL();
  model.jitter_used = jitter;
  model.standardized_targets = K * model.dual_weights;
  return model;
}

}  // namespace sonokin

#endif  // SONOKIN_GPR_HPP
