// Bounds for the average effect on the treated in a two-point DGP under the
// three propensity regimes, and the split of their gap into in-class and
// between-class parts.

#include <iostream>

#include "effbound/effbound.hpp"

using namespace effbound;

int main() {
  // Two covariate values, binary treatment, S = {1}.
  DiscreteSupport support({"x1", "x2"}, {0.5, 0.5});
  std::vector<OutcomeLaw> outcomes = {
      OutcomeLaw::gaussian(0.0, 1.0), OutcomeLaw::gaussian(0.0, 1.0),  // t = 0 at x1, x2
      OutcomeLaw::gaussian(1.0, 1.0), OutcomeLaw::gaussian(2.0, 1.0),  // t = 1 at x1, x2
  };
  Eigen::MatrixXd cells(1, 2);
  cells << 0.4, 0.6;
  const Dgp dgp(TreatmentSet(1, {1}), support, outcomes, StratifiedModel({0, 1}, cells));

  const auto& S = dgp.subpopulation();
  const BoundReport r = compute_bounds(dgp, S, MomentFamily::mean(), dgp.propensity());
  const Eigen::Vector2d a(-1.0, 1.0);
  std::cout << "beta*        " << r.moments.beta.transpose() << "\n"
            << "ATT bound  k " << a.dot(r.V_k * a) << "\n"
            << "           p " << a.dot(r.V_p * a) << "\n"
            << "          uk " << a.dot(r.V_uk * a) << "\n"
            << "Delta^0\n" << *r.delta0 << "\nDelta^1\n" << *r.delta1 << "\n";

  const ClosedFormBound att = closed_form_bound(dgp, S, MomentFamily::mean(), dgp.propensity());
  std::cout << att.name << " closed form " << att.value << "\n";
}
