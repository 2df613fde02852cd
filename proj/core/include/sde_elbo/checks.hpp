#pragma once

#include <string>
#include <vector>

#include "sde_elbo/vp_sde.hpp"

namespace sde_elbo {

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string details;
};

struct CheckOptions {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out_dir;  // CSV artifacts written here when non-empty
  bool quick = false;   // reduced sample counts for smoke runs
};

// Table-1 losses and the score-matching identity chain on Gaussian data,
// for a random net and for the oracle-score stub.
std::vector<CheckResult> check_identity(const CheckOptions& opt);

// DT-ELBO ladder E^L -> E^inf over L in {16, 64, 256, 1024}.
std::vector<CheckResult> check_consistency(const CheckOptions& opt);

// Debiased time sampler: inverse-CDF round trip, KS distance,
// normalization, and agreement of the two estimators of int DSM ds.
std::vector<CheckResult> check_debias(const CheckOptions& opt);

// Variational gap identity on the 1-D linear oracle.
std::vector<CheckResult> check_gap(const CheckOptions& opt);

// Marginal equivalence of the lambda family with the oracle score.
std::vector<CheckResult> check_lambda_equiv(const CheckOptions& opt);

// Feynman-Kac density vs closed-form linear-SDE marginals.
std::vector<CheckResult> check_fk(const CheckOptions& opt);

// dispatcher over {identity, consistency, debias, gap, lambda-equiv, fk}
std::vector<CheckResult> run_check_suite(const std::string& name,
                                         const CheckOptions& opt);
bool all_pass(const std::vector<CheckResult>& results);
std::string format_check_report(const std::vector<CheckResult>& results);

}  // namespace sde_elbo
