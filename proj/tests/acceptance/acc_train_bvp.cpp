// Criterion 11: the nonlinear first-order BVP. The MNO reaches small
// residuals in distribution and degrades by < 2x in eps_rel on unit-normal
// coefficients, while the stacked-channel UNO degrades by > 10x.

#include "acceptance.hpp"
#include "train_harness.hpp"

using namespace gfmm;
using namespace acceptance;

int main() {
  auto mno = run_training("bvp1d-mno-desk.json", "bvp1d-mno");
  auto uno = run_training("bvp1d-uno-desk.json", "bvp1d-uno");

  const Index n = 1000;
  const auto mno_in = eval_on(mno, SchemeKind::solution, BasisMode::combination, "train", n, 0xACC11);
  const auto mno_ood = eval_on(mno, SchemeKind::solution, BasisMode::combination, "unit_normal", n, 0xACC12);
  const auto uno_in = eval_on(uno, SchemeKind::solution, BasisMode::combination, "train", n, 0xACC11);
  const auto uno_ood = eval_on(uno, SchemeKind::solution, BasisMode::combination, "unit_normal", n, 0xACC12);

  const double res_int = mno_in.res_int.value_or(1e9);
  const double res_bnd = mno_in.res_bnd.value_or(1e9);
  acceptance::report("criterion 11a (BVP MNO in-distribution residuals)", res_int <= 1.0 && res_bnd <= 0.1,
                     "interior residual = " + fmt(res_int) + " (tol 1e0), boundary residual = " + fmt(res_bnd) +
                         " (tol 1e-1) on 1000 samples");

  const double mno_ratio = mno_ood.rel.value_or(1e9) / mno_in.rel.value_or(1.0);
  const double uno_ratio = uno_ood.rel.value_or(1e9) / uno_in.rel.value_or(1.0);
  acceptance::report("criterion 11b (MNO out-of-distribution degradation < 2x)", mno_ratio < 2.0,
                     "MNO eps_rel " + fmt(mno_in.rel.value_or(-1)) + " -> " + fmt(mno_ood.rel.value_or(-1)) +
                         " (ratio " + fmt(mno_ratio) + ")");
  acceptance::report("criterion 11c (stacked-channel UNO degrades > 10x)", uno_ratio > 10.0,
                     "UNO eps_rel " + fmt(uno_in.rel.value_or(-1)) + " -> " + fmt(uno_ood.rel.value_or(-1)) +
                         " (ratio " + fmt(uno_ratio) + ")");

  return acceptance::exit_code();
}
