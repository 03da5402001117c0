#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace auginv {

// Row -> group assignment for a batch built from M augmented copies of each
// seed: B/M groups of exactly M rows.
struct GroupIndex {
    std::vector<std::int32_t> group_of_row;
    std::int32_t num_groups = 0;
    std::int32_t group_size = 0;  // M

    // Rows [i*M, (i+1)*M) belong to group i.
    static GroupIndex contiguous(int batch, int m_copies);
    void validate() const;  // throws ContractError unless a valid M-partition
    int batch() const { return static_cast<int>(group_of_row.size()); }
};

// Per-layer loss coefficients: geometric ramp summing to the total budget
// with last = 10 * first.
struct AlphaSchedule {
    double alpha = 0.0;
    std::vector<double> coeffs;  // size L
};

// L >= 1, alpha in (0,1). For L == 1 the single coefficient is alpha itself.
AlphaSchedule alpha_schedule(int num_layers, double alpha);

// (1/D) * sum_k (a_k - b_k)^2. Throws ContractError on length mismatch or
// empty input.
template <typename S>
double mean_sq_distance(std::span<const S> a, std::span<const S> b);

// Full B x B matrix of mean-square distances between the rows of x (B x D,
// row-major), computed with the Gram-matrix expansion
// ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b. Cancellation can produce tiny
// negatives; entries are clamped to >= 0 and the diagonal is exactly 0.
template <typename S>
void pairwise_mean_sq_dists(const S* x, int batch, std::int64_t dim, S* out);

enum class InvarianceVariant {
    kVerbatim,   // numerator sums group terms (scales with the group count)
    kGroupMean,  // numerator additionally divided by the number of groups
};

// Within-group mean activation distance normalized by the all-pairs batch
// mean distance (both over ordered pairs, self-pairs included):
//   numerator   = sum_k (1/|S_k|^2) sum_{i,j in S_k} d(x_i, x_j)
//   denominator = (1/B^2) sum_{i,j in B} d(x_i, x_j)
// Throws DegenerateBatchError when every pairwise distance is zero, and
// ContractError when B < 2 or fewer than two groups.
template <typename S>
double invariance_loss(const S* x, int batch, std::int64_t dim, const GroupIndex& groups,
                       InvarianceVariant variant = InvarianceVariant::kVerbatim);

// Same value, plus d(loss)/dx scaled by `upstream` accumulated into dx
// (dx has the shape of x and is ADDED to, not overwritten). Gradients flow
// through both the numerator and the denominator of the ratio.
template <typename S>
double invariance_loss_grad(const S* x, int batch, std::int64_t dim, const GroupIndex& groups,
                            InvarianceVariant variant, double upstream, S* dx);

// Mean over the batch of -log softmax(logits)[label], max-shift stabilized.
template <typename S>
double softmax_cross_entropy(const S* logits, const int* labels, int batch, int classes);

// Value plus d(ce)/dlogits scaled by `upstream`, accumulated into dlogits.
template <typename S>
double softmax_cross_entropy_grad(const S* logits, const int* labels, int batch, int classes,
                                  double upstream, S* dlogits);

// (1 - alpha) * ce + sum_l coeffs[l] * inv_losses[l].
double total_loss(double cross_entropy, std::span<const double> inv_losses, const AlphaSchedule& schedule);

}  // namespace auginv
