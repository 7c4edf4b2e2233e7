#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bmdg/rng.hpp"

namespace bmdg {

// Dense probability table over a few small discrete axes, row-major (last axis fastest).
// For the bound checks the axes are (P^1, ..., P^K, Y): Y is the last axis.
class DiscreteJoint {
public:
    DiscreteJoint(std::vector<int> shape, std::vector<double> p);

    const std::vector<int>& shape() const { return shape_; }
    const std::vector<double>& p() const { return p_; }
    int rank() const { return static_cast<int>(shape_.size()); }

    // Marginal over the listed axes, in the listed order.
    DiscreteJoint marginal(const std::vector<int>& axes) const;
    double entropy() const;

private:
    struct Unchecked {};
    DiscreteJoint(Unchecked, std::vector<int> shape, std::vector<double> p)
        : shape_(std::move(shape)), p_(std::move(p)) {}

    std::vector<int> shape_;
    std::vector<double> p_;
};

// Natural-log units; 0 log 0 = 0.
double entropy(const std::vector<double>& p);
// MI between two groups of axes, by exact summation.
double mutual_info(const DiscreteJoint& joint, const std::vector<int>& x_axes, const std::vector<int>& y_axes);
// Two-axis table (X, Y).
double mutual_info(const DiscreteJoint& joint);

// Largest |p(P^1..P^K) - prod_k p(P^k)| over the table; Y is the last axis.
double independence_violation(const DiscreteJoint& joint);

struct LowerBoundReport {
    double joint_mi = 0;         // MI(P^1..P^K; Y)
    double sum_marginal_mi = 0;  // sum_k MI(P^k; Y)
    double gap = 0;              // joint_mi - sum_marginal_mi
    bool holds = false;
    std::string note;
};

// Checks MI(P^1..P^K; Y) >= sum_k MI(P^k; Y) - 1e-9. Requires the parts to be jointly
// independent (factorization within 1e-10), otherwise PreconditionError.
LowerBoundReport verify_lower_bound(const DiscreteJoint& joint);

struct CeBoundReport {
    double cond_ce = 0;       // H(Y; Yhat | P)
    double cond_entropy = 0;  // H(Y | P)
    double kl = 0;            // E_P KL(p(Y|P) || q(Y|P))
    bool holds = false;       // cond_ce >= cond_entropy - 1e-12 and the KL identity within 1e-10
};

// joint over (P, Y); predictor holds q(y|p) row-major [|P|, |Y|].
CeBoundReport verify_ce_bound(const DiscreteJoint& joint, const std::vector<double>& predictor);

// Random parts, jointly independent by construction, with a random Y | P.
DiscreteJoint random_independent_joint(Rng& rng, int max_parts = 3, int max_symbols = 4);
// Random (P, Y) table with a random predictor, both returned.
std::pair<DiscreteJoint, std::vector<double>> random_predictor_pair(Rng& rng, int max_symbols = 6);
// Y = XOR(P^1, P^2) with independent uniform bits.
DiscreteJoint xor_witness();

struct VerificationSummary {
    int trials = 0;
    int lower_bound_failures = 0;
    int ce_failures = 0;
    double max_lower_bound_violation = 0;  // max(0, sum_marginal_mi - joint_mi)
    double max_ce_violation = 0;           // max(0, cond_entropy - cond_ce)
    double max_kl_identity_error = 0;
    double xor_gap = 0;
    double max_gap = 0;
    bool passed = false;

    std::string report() const;
};

// `trials` lower-bound constructions and `trials` predictor pairs from one seed.
VerificationSummary run_verification(int trials, std::uint64_t seed);

}  // namespace bmdg
