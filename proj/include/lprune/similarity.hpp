#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lprune/model.hpp"
#include "lprune/signal.hpp"

namespace lprune::similarity {

// b x b linear-kernel gram matrix, double precision.
struct GramMatrix {
    int b = 0;
    std::vector<double> k;  // row-major b*b

    double at(int i, int j) const { return k[static_cast<size_t>(i) * b + j]; }
};

// (batch, features) view of an activation: trailing dimensions collapsed.
Tensor flatten_features(const Tensor& activation);

// K = F F^T with double accumulation.
GramMatrix gram_matrix(const Tensor& features);

// How the estimator reads "gram matrix with its diagonal removed".
//   ZeroDiagonal  entrywise: K with diag(K) zeroed (default)
//   MatrixProduct literal matrix product K (11^T - I)
enum class DiagRule { ZeroDiagonal, MatrixProduct };

// Unbiased statistic
//   ( tr(K~ L~) + (1^T K~ 1)(1^T L~ 1) / ((b-1)(b-2)) - 2/(b-2) 1^T K~ L~ 1 )
//   / (b (b-3))
// where K~, L~ follow the diagonal rule. Requires b >= 4. Exactly zero for
// constant features; can be slightly negative for independent ones.
double hsic1(const GramMatrix& k, const GramMatrix& l, DiagRule rule = DiagRule::ZeroDiagonal);

// hsic1(K,L) / sqrt(hsic1(K,K) hsic1(L,L)), clamped to [-1, 1]. Throws when
// either self-term is not positive (degenerate features).
double cka(const GramMatrix& k, const GramMatrix& l, DiagRule rule = DiagRule::ZeroDiagonal);

// Plain cosine of two equal-shape matrices viewed as vectors.
double cosine_of(const std::vector<double>& a, const std::vector<double>& b);

enum class Metric { CKA, Cosine };
Metric metric_from_name(const std::string& name);
std::string metric_name(Metric m);

struct SimilarityOptions {
    int samples_per_batch = 500;
    int num_batches = 5;
    Metric metric = Metric::CKA;
    uint64_t seed = 0;
    bool stratified = false;  // per-class proportional draw instead of uniform
};

struct SimilarityResult {
    int l = 0;                    // number of units
    std::vector<double> s;        // l x l, averaged over batches
    std::vector<double> z;        // row sums, z[i] = sum_j s[i][j]
    double s_at(int i, int j) const { return s[static_cast<size_t>(i) * l + j]; }
};

// Pairwise unit-output similarity under `pool`: for each batch, draws
// samples without replacement (seed mixed with the batch index), collects
// every unit's eval-mode activation, and compares gram matrices. Cosine
// compares the two b x b gram matrices as vectors so units of different
// widths stay comparable. Entries are averaged across batches.
SimilarityResult similarity_matrix(const ModelGraph& model, const signal::SignalDataset& ds,
                                   const std::vector<int>& pool, const SimilarityOptions& opt);

void save_matrix_csv(const std::vector<double>& m, int rows, int cols, const std::string& path);
std::vector<double> load_z_csv(const std::string& path);
void save_z_csv(const std::vector<double>& z, const std::string& path);

}  // namespace lprune::similarity
