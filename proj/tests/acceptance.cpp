// Acceptance gate: each numbered criterion prints a single PASS/FAIL line.
// Usage: acceptance <criterion 1..10> <configs-dir> [out-dir]
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include <rieszlab/analysis.hpp>
#include <rieszlab/harness.hpp>

using namespace riesz;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
  void fail(const std::string& s) {
    pass = false;
    note(s);
  }
};

Outcome run_experiments(const std::vector<std::string>& names,
                        const std::string& configs, const std::string& out) {
  Outcome oc;
  for (const auto& name : names) {
    auto cfg = parse_config_file(configs + "/" + name + ".cfg");
    ExperimentReport rep = run(cfg, out);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s: %zu verdicts, %.1fs", name.c_str(),
                  rep.verdicts.size(), rep.wall_seconds);
    oc.note(buf);
    for (const auto& e : rep.errors) oc.fail(name + " error: " + e);
    for (const auto& v : rep.verdicts) {
      if (!v.pass) {
        std::snprintf(buf, sizeof(buf), "%s/%s: measured %.6g vs threshold %.6g",
                      name.c_str(), v.name.c_str(), v.measured, v.threshold);
        oc.fail(buf);
      }
    }
    if (rep.verdicts.empty()) oc.fail(name + ": no verdicts emitted");
  }
  return oc;
}

// Criterion 9: exact discrete identities, checked directly on dense-path grids.
Outcome exact_identities() {
  Outcome oc;
  Grid g(2, 1.0, 0.125);
  auto base = identity_field(2);
  auto comp = compact_perturbation(base, scaled_identity(2, 2.0), 0.5);
  auto opI = DiscreteOperator::assemble(g, base, unit_weight(2));
  auto opC = DiscreteOperator::assemble(g, comp, power_weight(2, 0.3));
  auto opCu = DiscreteOperator::assemble(g, comp, unit_weight(2));
  FunCalc calcI(opI), calcCu(opCu);
  const auto& d = opC.dense_spectral();

  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd;
  double worst_factored = 0.0, worst_split = 0.0, worst_iso = 0.0, worst_quad = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    GridFunction f(g);
    for (Index k = 0; k < g.num_interior(); ++k) f.values[k] = nd(rng);

    // Factored resolvent-difference identity vs direct subtraction.
    const double t = 1.0 + trial;
    VectorGridFunction fd = resolvent_diff_grad(calcCu, calcI, t, f);
    GridFunction diff(g, calcI.resolvent(1.0, t, f).values -
                             calcCu.resolvent(1.0, t, f).values);
    VectorGridFunction direct = opCu.gradient(diff);
    worst_factored = std::max(worst_factored, (fd.values - direct.values).norm() /
                                                  (direct.values.norm() + 1e-300));

    // Coefficient-difference splitting sums to (L0 - L) f.
    auto [p1, p2] = split_difference(opC, opI, f);
    Eigen::VectorXd ld = opI.apply(f).values - opC.apply(f).values;
    worst_split =
        std::max(worst_split, (p1.values + p2.values - ld).norm() / ld.norm());

    // Energy isometry of L^{-1/2} at p = 2.
    FunCalc calcC(opC);
    GridFunction u = calcC.inv_sqrt(0.0, 1.0, f);
    worst_iso = std::max(worst_iso, std::abs(opC.energy(u) - opC.inner_w(f, f)) /
                                        opC.inner_w(f, f));

    // Quadrature vs the dense spectral oracle for L^{-1/2}.
    Eigen::VectorXd c =
        d.vectors.transpose() * (opC.node_mass().asDiagonal() * f.values);
    for (Index j = 0; j < c.size(); ++j) c[j] /= std::sqrt(d.values[j]);
    Eigen::VectorXd oracle = d.vectors * c;
    worst_quad =
        std::max(worst_quad, (u.values - oracle).norm() / oracle.norm());
  }

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "factored %.3g (<=1e-8), split %.3g (<=1e-9), isometry %.3g "
                "(<=1e-4), quad/oracle %.3g (<=1e-5)",
                worst_factored, worst_split, worst_iso, worst_quad);
  oc.note(buf);
  if (worst_factored > 1e-8) oc.fail("factored identity residual");
  if (worst_split > 1e-9) oc.fail("split sum residual");
  if (worst_iso > 1e-4) oc.fail("energy isometry defect");
  if (worst_quad > 1e-5) oc.fail("quadrature/oracle agreement");
  return oc;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <criterion 1..10> <configs-dir> [out-dir]\n",
                 argv[0]);
    return 2;
  }
  const int k = std::atoi(argv[1]);
  const std::string configs = argv[2];
  const std::string out = argc > 3 ? argv[3] : "acceptance_out";
  std::filesystem::create_directories(out);

  Outcome oc;
  switch (k) {
    case 1: oc = run_experiments({"conic-unbounded"}, configs, out); break;
    case 2: oc = run_experiments({"smooth-tiled"}, configs, out); break;
    case 3: oc = run_experiments({"rh-probe"}, configs, out); break;
    case 4: oc = run_experiments({"strip-gd", "compact-gd"}, configs, out); break;
    case 5: oc = run_experiments({"gd-stability"}, configs, out); break;
    case 6: oc = run_experiments({"resolvent-decay"}, configs, out); break;
    case 7: oc = run_experiments({"appendix-lemmas"}, configs, out); break;
    case 8: oc = run_experiments({"heat-kernel-bounds"}, configs, out); break;
    case 9: oc = exact_identities(); break;
    case 10: oc = run_experiments({"weighted-degenerate"}, configs, out); break;
    default:
      std::fprintf(stderr, "criterion must be 1..10\n");
      return 2;
  }

  std::printf("CRITERION %d: %s  [%s]\n", k, oc.pass ? "PASS" : "FAIL",
              oc.detail.c_str());
  return oc.pass ? 0 : 1;
}
