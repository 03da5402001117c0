#include "auginv/objective.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "auginv/errors.hpp"
#include "auginv/util.hpp"

namespace auginv {

namespace {
template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRM = Eigen::Map<const MatrixRM<S>>;
}  // namespace

GroupIndex GroupIndex::contiguous(int batch, int m_copies) {
    if (m_copies < 1 || batch < 1 || batch % m_copies != 0)
        throw ContractError(strf("GroupIndex: batch %d not divisible by M=%d", batch, m_copies));
    GroupIndex g;
    g.group_size = m_copies;
    g.num_groups = batch / m_copies;
    g.group_of_row.resize(static_cast<size_t>(batch));
    for (int r = 0; r < batch; ++r) g.group_of_row[static_cast<size_t>(r)] = r / m_copies;
    return g;
}

void GroupIndex::validate() const {
    if (group_size < 1 || num_groups < 1) throw ContractError("GroupIndex: empty");
    if (batch() != num_groups * group_size) throw ContractError("GroupIndex: rows do not partition into groups");
    std::vector<int> counts(static_cast<size_t>(num_groups), 0);
    for (std::int32_t g : group_of_row) {
        if (g < 0 || g >= num_groups) throw ContractError("GroupIndex: group id out of range");
        ++counts[static_cast<size_t>(g)];
    }
    for (int c : counts)
        if (c != group_size) throw ContractError("GroupIndex: group sizes are not all equal to M");
}

AlphaSchedule alpha_schedule(int num_layers, double alpha) {
    if (num_layers < 1) throw ContractError("alpha_schedule: L must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("alpha_schedule: alpha must be in (0,1)");
    AlphaSchedule s;
    s.alpha = alpha;
    s.coeffs.resize(static_cast<size_t>(num_layers));
    if (num_layers == 1) {
        s.coeffs[0] = alpha;
        return s;
    }
    // Geometric ramp r^(l-1) with r chosen so the last coefficient is 10x the
    // first, normalized to sum to alpha.
    double ratio = std::pow(10.0, 1.0 / (num_layers - 1));
    double sum = 0.0, term = 1.0;
    for (int l = 0; l < num_layers; ++l) {
        s.coeffs[static_cast<size_t>(l)] = term;
        sum += term;
        term *= ratio;
    }
    for (double& c : s.coeffs) c *= alpha / sum;
    return s;
}

template <typename S>
double mean_sq_distance(std::span<const S> a, std::span<const S> b) {
    if (a.size() != b.size()) throw ContractError("mean_sq_distance: length mismatch");
    if (a.empty()) throw ContractError("mean_sq_distance: empty vectors");
    double acc = 0.0;
    for (size_t k = 0; k < a.size(); ++k) {
        double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

template <typename S>
void pairwise_mean_sq_dists(const S* x, int batch, std::int64_t dim, S* out) {
    MapRM<S> xm(x, batch, dim);
    // Fixed-order row norms (a vectorized reduction would make the summation
    // order depend on the caller's buffer alignment).
    Eigen::Matrix<S, Eigen::Dynamic, 1> norms(batch);
    for (int i = 0; i < batch; ++i) {
        S acc = S(0);
        const S* row = x + static_cast<std::int64_t>(i) * dim;
        for (std::int64_t k = 0; k < dim; ++k) acc += row[k] * row[k];
        norms[i] = acc;
    }
    MatrixRM<S> gram = xm * xm.transpose();
    const S inv_dim = static_cast<S>(1.0 / static_cast<double>(dim));
    for (int i = 0; i < batch; ++i) {
        out[static_cast<std::int64_t>(i) * batch + i] = S(0);
        for (int j = i + 1; j < batch; ++j) {
            S sq = norms[i] + norms[j] - S(2) * gram(i, j);
            S d = std::max(S(0), sq) * inv_dim;
            out[static_cast<std::int64_t>(i) * batch + j] = d;
            out[static_cast<std::int64_t>(j) * batch + i] = d;
        }
    }
}

namespace {

// Sums of the pairwise-distance matrix needed by Eq-ratio losses.
struct PairSums {
    double within_groups = 0.0;  // sum_k (1/M_k^2) * sum_{i,j in S_k} d_ij
    double all_pairs = 0.0;      // sum_{i,j} d_ij (unnormalized)
};

template <typename S>
PairSums pair_sums(const S* dists, int batch, const GroupIndex& groups) {
    PairSums sums;
    double within_raw = 0.0;
    for (int i = 0; i < batch; ++i) {
        for (int j = 0; j < batch; ++j) {
            double d = static_cast<double>(dists[static_cast<std::int64_t>(i) * batch + j]);
            sums.all_pairs += d;
            if (groups.group_of_row[static_cast<size_t>(i)] == groups.group_of_row[static_cast<size_t>(j)])
                within_raw += d;
        }
    }
    double m = static_cast<double>(groups.group_size);
    sums.within_groups = within_raw / (m * m);
    return sums;
}

void check_invariance_pre(int batch, const GroupIndex& groups) {
    if (batch < 2) throw ContractError("invariance_loss: batch must have at least 2 rows");
    if (groups.batch() != batch) throw ContractError("invariance_loss: group index size mismatch");
    if (groups.num_groups < 2) throw ContractError("invariance_loss: need at least two groups");
    groups.validate();
}

}  // namespace

template <typename S>
double invariance_loss(const S* x, int batch, std::int64_t dim, const GroupIndex& groups,
                       InvarianceVariant variant) {
    check_invariance_pre(batch, groups);
    std::vector<S> dists(static_cast<size_t>(batch) * batch);
    pairwise_mean_sq_dists(x, batch, dim, dists.data());
    PairSums sums = pair_sums(dists.data(), batch, groups);
    if (sums.all_pairs <= 0.0) throw DegenerateBatchError("invariance_loss: all pairwise distances are zero");
    double numerator = sums.within_groups;
    if (variant == InvarianceVariant::kGroupMean) numerator /= groups.num_groups;
    double denominator = sums.all_pairs / (static_cast<double>(batch) * batch);
    return numerator / denominator;
}

template <typename S>
double invariance_loss_grad(const S* x, int batch, std::int64_t dim, const GroupIndex& groups,
                            InvarianceVariant variant, double upstream, S* dx) {
    check_invariance_pre(batch, groups);
    std::vector<S> dists(static_cast<size_t>(batch) * batch);
    pairwise_mean_sq_dists(x, batch, dim, dists.data());
    PairSums sums = pair_sums(dists.data(), batch, groups);
    if (sums.all_pairs <= 0.0) throw DegenerateBatchError("invariance_loss: all pairwise distances are zero");

    double group_scale = variant == InvarianceVariant::kGroupMean ? 1.0 / groups.num_groups : 1.0;
    double numerator = sums.within_groups * group_scale;
    double b2 = static_cast<double>(batch) * batch;
    double denominator = sums.all_pairs / b2;
    double loss = numerator / denominator;

    //   d n/dx_p = (4 c_g/D) (M x_p - s_g)    with c_g = group_scale / M^2
    //   d q/dx_p = (4/(D B^2)) (B x_p - s_B)
    //   d loss   = (1/q) dn - (n/q^2) dq
    // s_g / s_B are the group / batch column sums; this O(BD) form is the
    // exact gradient of the matrix-expansion value above.
    MapRM<S> xm(x, batch, dim);
    Eigen::Map<MatrixRM<S>> dxm(dx, batch, dim);
    MatrixRM<S> group_sums = MatrixRM<S>::Zero(groups.num_groups, dim);
    for (int r = 0; r < batch; ++r) group_sums.row(groups.group_of_row[static_cast<size_t>(r)]) += xm.row(r);
    Eigen::Matrix<S, 1, Eigen::Dynamic> batch_sum = xm.colwise().sum();

    double m = static_cast<double>(groups.group_size);
    double inv_d = 1.0 / static_cast<double>(dim);
    double num_coef = upstream * (1.0 / denominator) * 4.0 * group_scale / (m * m) * inv_d;
    double den_coef = upstream * (loss / denominator) * 4.0 / b2 * inv_d;
    for (int r = 0; r < batch; ++r) {
        int g = groups.group_of_row[static_cast<size_t>(r)];
        dxm.row(r) += (static_cast<S>(num_coef * m) * xm.row(r) - static_cast<S>(num_coef) * group_sums.row(g)) -
                      (static_cast<S>(den_coef * batch) * xm.row(r) - static_cast<S>(den_coef) * batch_sum);
    }
    return loss;
}

template <typename S>
double softmax_cross_entropy(const S* logits, const int* labels, int batch, int classes) {
    if (batch < 1 || classes < 1) throw ContractError("cross_entropy: empty batch");
    double total = 0.0;
    for (int b = 0; b < batch; ++b) {
        const S* row = logits + static_cast<std::int64_t>(b) * classes;
        int label = labels[b];
        if (label < 0 || label >= classes) throw ContractError(strf("cross_entropy: label %d out of range", label));
        double max_logit = row[0];
        for (int c = 1; c < classes; ++c) max_logit = std::max(max_logit, static_cast<double>(row[c]));
        double sum_exp = 0.0;
        for (int c = 0; c < classes; ++c) sum_exp += std::exp(static_cast<double>(row[c]) - max_logit);
        total += std::log(sum_exp) - (static_cast<double>(row[label]) - max_logit);
    }
    return total / batch;
}

template <typename S>
double softmax_cross_entropy_grad(const S* logits, const int* labels, int batch, int classes,
                                  double upstream, S* dlogits) {
    double value = softmax_cross_entropy(logits, labels, batch, classes);
    double scale = upstream / batch;
    for (int b = 0; b < batch; ++b) {
        const S* row = logits + static_cast<std::int64_t>(b) * classes;
        S* drow = dlogits + static_cast<std::int64_t>(b) * classes;
        double max_logit = row[0];
        for (int c = 1; c < classes; ++c) max_logit = std::max(max_logit, static_cast<double>(row[c]));
        double sum_exp = 0.0;
        for (int c = 0; c < classes; ++c) sum_exp += std::exp(static_cast<double>(row[c]) - max_logit);
        for (int c = 0; c < classes; ++c) {
            double p = std::exp(static_cast<double>(row[c]) - max_logit) / sum_exp;
            double onehot = c == labels[b] ? 1.0 : 0.0;
            drow[c] += static_cast<S>(scale * (p - onehot));
        }
    }
    return value;
}

double total_loss(double cross_entropy, std::span<const double> inv_losses, const AlphaSchedule& schedule) {
    if (inv_losses.size() != schedule.coeffs.size())
        throw ContractError("total_loss: inv_losses size must match the schedule");
    double total = (1.0 - schedule.alpha) * cross_entropy;
    for (size_t l = 0; l < inv_losses.size(); ++l) total += schedule.coeffs[l] * inv_losses[l];
    return total;
}

template double mean_sq_distance<float>(std::span<const float>, std::span<const float>);
template double mean_sq_distance<double>(std::span<const double>, std::span<const double>);
template void pairwise_mean_sq_dists<float>(const float*, int, std::int64_t, float*);
template void pairwise_mean_sq_dists<double>(const double*, int, std::int64_t, double*);
template double invariance_loss<float>(const float*, int, std::int64_t, const GroupIndex&, InvarianceVariant);
template double invariance_loss<double>(const double*, int, std::int64_t, const GroupIndex&, InvarianceVariant);
template double invariance_loss_grad<float>(const float*, int, std::int64_t, const GroupIndex&, InvarianceVariant,
                                            double, float*);
template double invariance_loss_grad<double>(const double*, int, std::int64_t, const GroupIndex&, InvarianceVariant,
                                             double, double*);
template double softmax_cross_entropy<float>(const float*, const int*, int, int);
template double softmax_cross_entropy<double>(const double*, const int*, int, int);
template double softmax_cross_entropy_grad<float>(const float*, const int*, int, int, double, float*);
template double softmax_cross_entropy_grad<double>(const double*, const int*, int, int, double, double*);

}  // namespace auginv
