#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "random.hpp"
#include "tabular.hpp"

namespace banditlab {

/// Synthetic rows in the case-study schema with known structure: mixed
/// continuous and categorical features, arm assignment that depends on the
/// features (when confounded), and an outcome whose expectation per arm is
/// a fixed function of the features.
class CaseStudyGenerator {
 public:
  explicit CaseStudyGenerator(bool confounded = true) : confounded_(confounded) {}

  const Schema& schema() const { return schema_; }

  /// Feature values only (arm and outcome left at 0).
  Row draw_features(Rng& rng) const {
    Row r;
    r.values.resize(6);
    const bool mutant = uniform01(rng) < 0.4;
    const bool n2 = uniform01(rng) < (mutant ? 0.55 : 0.3);
    const bool male = uniform01(rng) < 0.45;
    const double age = uniform01(rng) < 0.6 ? 62.0 + 8.0 * standard_normal(rng) : 45.0 + 6.0 * standard_normal(rng);
    const double size = uniform01(rng) < 0.7 ? 2.5 + 0.8 * standard_normal(rng) : 6.0 + 1.5 * standard_normal(rng);
    const double nodes = n2 ? 8.0 + 3.0 * standard_normal(rng) : 2.0 + 1.2 * standard_normal(rng);
    r.values[0] = std::clamp(age, 18.0, 90.0);
    r.values[1] = std::clamp(size, 0.1, 15.0);
    r.values[2] = std::clamp(nodes, 0.0, 30.0);
    r.values[3] = n2 ? 1.0 : 0.0;
    r.values[4] = mutant ? 1.0 : 0.0;
    r.values[5] = male ? 1.0 : 0.0;
    return r;
  }

  /// Expected outcome of arm `arm` for the features of `r`; in [0.05, 0.95].
  static double expected_outcome(const Row& r, std::size_t arm) {
    static constexpr std::array<double, 7> base{0.45, 0.50, 0.40, 0.55, 0.35, 0.48, 0.42};
    static constexpr std::array<double, 7> size_effect{-0.03, -0.05, 0.01, -0.06, 0.02, -0.02, 0.00};
    static constexpr std::array<double, 7> n2_effect{-0.10, 0.05, -0.05, -0.15, 0.10, 0.00, -0.02};
    static constexpr std::array<double, 7> mutant_effect{0.00, -0.12, 0.08, 0.05, -0.05, 0.10, 0.00};
    const double age = (r.values[0] - 55.0) / 10.0;
    const double size = r.values[1] - 3.5;
    double m = base[arm] + size_effect[arm] * size + n2_effect[arm] * r.values[3] +
               mutant_effect[arm] * r.values[4] - 0.02 * age;
    return std::clamp(m, 0.05, 0.95);
  }

  /// Assignment probabilities: uniform unless confounded, in which case
  /// larger tumours and N2 status push towards arms D and E.
  Eigen::VectorXd assignment_probabilities(const Row& r) const {
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(7);
    if (confounded_) {
      const double size = r.values[1] - 3.5;
      logits[3] = 0.6 * size + 1.2 * r.values[3];
      logits[4] = 0.4 * size + 0.8 * r.values[3];
      logits[1] = -0.5 * size + 0.7 * r.values[4];
      logits[0] = -0.8 * r.values[3];
    }
    Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
    return p / p.sum();
  }

  Row draw(Rng& rng) const {
    Row r = draw_features(rng);
    const auto p = assignment_probabilities(r);
    r.arm = draw_weighted(rng, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
    r.outcome = std::clamp(expected_outcome(r, r.arm) + 0.05 * standard_normal(rng), 0.0, 1.0);
    return r;
  }

  Dataset generate(std::size_t n, std::uint64_t seed) const {
    Rng rng = make_rng(seed, "case-study-generator");
    Dataset d{schema_, {}};
    d.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) d.rows.push_back(draw(rng));
    return d;
  }

  /// Population mean outcome of every arm (Monte Carlo over features).
  static Eigen::VectorXd population_means(std::size_t samples, std::uint64_t seed) {
    const CaseStudyGenerator g(false);
    Rng rng = make_rng(seed, "case-study-truth");
    Eigen::VectorXd m = Eigen::VectorXd::Zero(7);
    for (std::size_t i = 0; i < samples; ++i) {
      const Row r = g.draw_features(rng);
      for (std::size_t a = 0; a < 7; ++a) m[static_cast<Eigen::Index>(a)] += expected_outcome(r, a);
    }
    return m / static_cast<double>(samples);
  }

 private:
  bool confounded_;
  Schema schema_ = case_study_schema();
};

}  // namespace banditlab
