#include "avgpg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "avgpg/error.hpp"

namespace avgpg {

PolicySpec PolicySpec::tabular(int n_states, int n_actions) {
  PolicySpec spec;
  spec.kind_ = PolicyKind::TabularSoftmax;
  spec.n_states_ = n_states;
  spec.n_actions_ = n_actions;
  spec.dim_ = n_states * n_actions;
  spec.feature_bound_ = 1.0;
  return spec;
}

PolicySpec PolicySpec::linear(int n_states, int n_actions, Matrix features) {
  if (features.rows() != n_states * n_actions || features.cols() < 1) {
    throw Error(ErrorKind::InvalidArgument, "features must be (S*A) x d with d >= 1");
  }
  if (!features.allFinite()) throw Error(ErrorKind::InvalidArgument, "features must be finite");
  PolicySpec spec;
  spec.kind_ = PolicyKind::LinearSoftmax;
  spec.n_states_ = n_states;
  spec.n_actions_ = n_actions;
  spec.dim_ = static_cast<int>(features.cols());
  spec.feature_bound_ = features.rowwise().norm().maxCoeff();
  spec.features_ = std::move(features);
  return spec;
}

PolicySpec PolicySpec::random_linear(int n_states, int n_actions, int dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix features(n_states * n_actions, dim);
  // Box-Muller on the portable uniform stream.
  for (Eigen::Index i = 0; i < features.size(); ++i) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    features.data()[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  return linear(n_states, n_actions, std::move(features));
}

Matrix PolicySpec::logit_jacobian(int s) const {
  if (kind_ == PolicyKind::TabularSoftmax) {
    Matrix jac = Matrix::Zero(n_actions_, dim_);
    for (int a = 0; a < n_actions_; ++a) jac(a, s * n_actions_ + a) = 1.0;
    return jac;
  }
  return features_.middleRows(s * n_actions_, n_actions_);
}

Vector PolicySpec::logits(const PolicyParams& theta, int s) const {
  Vector z(n_actions_);
  if (kind_ == PolicyKind::TabularSoftmax) {
    z = theta.theta.segment(s * n_actions_, n_actions_);
  } else {
    z = features_.middleRows(s * n_actions_, n_actions_) * theta.theta;
  }
  if (clamp_logits) z = z.cwiseMax(-logit_clamp).cwiseMin(logit_clamp);
  return z;
}

namespace {

// Max-subtracted softmax; also returns the log-normalizer of the shifted logits.
Vector softmax(const Vector& z, double* log_norm = nullptr) {
  const double zmax = z.maxCoeff();
  Vector p = (z.array() - zmax).exp();
  const double total = p.sum();
  if (log_norm) *log_norm = zmax + std::log(total);
  return p / total;
}

void check_state(const PolicySpec& spec, const PolicyParams& theta, int s) {
  if (s < 0 || s >= spec.n_states()) throw Error(ErrorKind::InvalidArgument, "state out of range");
  if (theta.dim() != spec.dim()) throw Error(ErrorKind::InvalidArgument, "theta has the wrong dimension");
}

}  // namespace

Vector action_probs(const PolicySpec& spec, const PolicyParams& theta, int s) {
  check_state(spec, theta, s);
  return softmax(spec.logits(theta, s));
}

PolicyTable policy_table(const PolicySpec& spec, const PolicyParams& theta) {
  PolicyTable table(spec.n_states(), spec.n_actions());
  for (int s = 0; s < spec.n_states(); ++s) table.row(s) = action_probs(spec, theta, s).transpose();
  return table;
}

double log_prob(const PolicySpec& spec, const PolicyParams& theta, int s, int a) {
  check_state(spec, theta, s);
  const Vector z = spec.logits(theta, s);
  double log_norm = 0.0;
  softmax(z, &log_norm);
  return z(a) - log_norm;
}

Vector score(const PolicySpec& spec, const PolicyParams& theta, int s, int a) {
  const Vector pi = action_probs(spec, theta, s);
  Vector centered = -pi;
  centered(a) += 1.0;
  return spec.logit_jacobian(s).transpose() * centered;
}

Matrix score_hessian(const PolicySpec& spec, const PolicyParams& theta, int s, int /*a*/) {
  const Vector pi = action_probs(spec, theta, s);
  const Matrix jac = spec.logit_jacobian(s);
  const Matrix cov = Matrix(pi.asDiagonal()) - pi * pi.transpose();
  Matrix h = -(jac.transpose() * cov * jac);
  return 0.5 * (h + h.transpose());
}

ScoreBounds estimate_bounds(const PolicySpec& spec, const std::vector<PolicyParams>& theta_samples) {
  if (theta_samples.empty()) throw Error(ErrorKind::InvalidArgument, "estimate_bounds needs at least one sample");
  ScoreBounds bounds;
  for (const auto& theta : theta_samples) {
    for (int s = 0; s < spec.n_states(); ++s) {
      // The Hessian is action independent, so one eigensolve per state.
      const Matrix h = score_hessian(spec, theta, s, 0);
      const Eigen::SelfAdjointEigenSolver<Matrix> eig(h, Eigen::EigenvaluesOnly);
      bounds.B = std::max(bounds.B, eig.eigenvalues().cwiseAbs().maxCoeff());
      for (int a = 0; a < spec.n_actions(); ++a) {
        bounds.G = std::max(bounds.G, score(spec, theta, s, a).norm());
      }
    }
  }
  return bounds;
}

nlohmann::json policy_to_json(const PolicySpec& spec, const PolicyParams* theta) {
  nlohmann::json j;
  j["kind"] = spec.kind() == PolicyKind::TabularSoftmax ? "tabular_softmax" : "linear_softmax";
  j["dims"] = {spec.n_states(), spec.n_actions(), spec.dim()};
  j["clamp_logits"] = spec.clamp_logits;
  if (spec.kind() == PolicyKind::LinearSoftmax) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < spec.features().rows(); ++r) {
      rows.push_back(std::vector<double>(spec.features().cols()));
      for (Eigen::Index c = 0; c < spec.features().cols(); ++c) rows.back()[static_cast<std::size_t>(c)] = spec.features()(r, c);
    }
    j["features"] = std::move(rows);
  }
  if (theta) j["theta"] = std::vector<double>(theta->theta.data(), theta->theta.data() + theta->theta.size());
  return j;
}

PolicySpec policy_from_json(const nlohmann::json& j, int n_states, int n_actions) {
  auto invalid = [](const std::string& field, const std::string& why) {
    return Error(ErrorKind::ConfigInvalid, "field 'policy." + field + "': " + why);
  };
  if (!j.is_object()) throw invalid("kind", "policy must be an object");
  const std::string kind = j.value("kind", std::string("tabular_softmax"));
  PolicySpec spec = PolicySpec::tabular(n_states, n_actions);
  if (kind == "tabular_softmax") {
    // defaults already set
  } else if (kind == "linear_softmax") {
    if (j.contains("features")) {
      const auto& rows = j.at("features");
      if (!rows.is_array() || rows.size() != static_cast<std::size_t>(n_states * n_actions) || rows.empty() ||
          !rows[0].is_array() || rows[0].empty()) {
        throw invalid("features", "expected (S*A) rows of feature vectors");
      }
      const auto d = rows[0].size();
      Matrix features(n_states * n_actions, static_cast<Eigen::Index>(d));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r].is_array() || rows[r].size() != d) throw invalid("features", "ragged feature table");
        for (std::size_t c = 0; c < d; ++c) {
          features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
        }
      }
      spec = PolicySpec::linear(n_states, n_actions, std::move(features));
    } else {
      const int dim = j.value("dim", 0);
      if (dim < 1) throw invalid("dim", "linear_softmax needs 'features' or a positive 'dim'");
      spec = PolicySpec::random_linear(n_states, n_actions, dim, j.value("feature_seed", std::uint64_t{0}));
    }
  } else {
    throw invalid("kind", "unknown policy kind '" + kind + "'");
  }
  spec.clamp_logits = j.value("clamp_logits", true);
  return spec;
}

}  // namespace avgpg
