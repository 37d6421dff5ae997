#include "lprune/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lprune/kernels.hpp"
#include "lprune/rng.hpp"

namespace lprune::similarity {

Tensor flatten_features(const Tensor& activation) {
    if (activation.rank() < 2) throw std::runtime_error("flatten_features: need a batch dimension");
    Tensor f = activation;
    int64_t d = 1;
    for (int i = 1; i < activation.rank(); ++i) d *= activation.dim(i);
    f.shape = {activation.dim(0), static_cast<int>(d)};
    return f;
}

GramMatrix gram_matrix(const Tensor& features) {
    if (features.rank() != 2) throw std::runtime_error("gram_matrix: features must be rank-2");
    GramMatrix g;
    g.b = features.dim(0);
    g.k.assign(static_cast<size_t>(g.b) * g.b, 0.0);
    kernels::gram(features.ptr(), g.b, features.dim(1), g.k.data());
    return g;
}

namespace {

// sums used by the estimator, all over the diagonal-removed matrix
struct TildeSums {
    double total = 0.0;             // 1^T K~ 1
    std::vector<double> row_sums;   // K~ 1
};

TildeSums tilde_sums(const GramMatrix& k) {
    TildeSums t;
    t.row_sums.assign(static_cast<size_t>(k.b), 0.0);
    for (int i = 0; i < k.b; ++i) {
        double r = 0.0;
        for (int j = 0; j < k.b; ++j)
            if (j != i) r += k.at(i, j);
        t.row_sums[static_cast<size_t>(i)] = r;
        t.total += r;
    }
    return t;
}

// K (11^T - I) = (row-sum matrix) - K: entry (i,j) = rowsum_i(K) - K(i,j),
// diagonal included. Kept for comparison with the entrywise reading.
std::vector<double> product_tilde(const GramMatrix& k) {
    std::vector<double> out(static_cast<size_t>(k.b) * k.b);
    for (int i = 0; i < k.b; ++i) {
        double full_row = 0.0;
        for (int j = 0; j < k.b; ++j) full_row += k.at(i, j);
        for (int j = 0; j < k.b; ++j)
            out[static_cast<size_t>(i) * k.b + j] = full_row - k.at(i, j);
    }
    return out;
}

// No symmetry assumed: 1^T K~ L~ 1 contracts K~ column sums with L~ row sums.
double hsic1_generic(const std::vector<double>& kt, const std::vector<double>& lt, int b) {
    double trace = 0.0, sum_k = 0.0, sum_l = 0.0, cross = 0.0;
    std::vector<double> col_k(static_cast<size_t>(b), 0.0), row_l(static_cast<size_t>(b), 0.0);
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
            const double kv = kt[static_cast<size_t>(i) * b + j];
            const double lv = lt[static_cast<size_t>(i) * b + j];
            trace += kv * lt[static_cast<size_t>(j) * b + i];
            col_k[static_cast<size_t>(j)] += kv;
            row_l[static_cast<size_t>(i)] += lv;
            sum_k += kv;
            sum_l += lv;
        }
    }
    for (int j = 0; j < b; ++j) cross += col_k[static_cast<size_t>(j)] * row_l[static_cast<size_t>(j)];
    const double bb = static_cast<double>(b);
    return (trace + sum_k * sum_l / ((bb - 1.0) * (bb - 2.0)) - 2.0 * cross / (bb - 2.0)) /
           (bb * (bb - 3.0));
}

}  // namespace

double hsic1(const GramMatrix& k, const GramMatrix& l, DiagRule rule) {
    if (k.b != l.b) throw std::runtime_error("hsic1: gram matrices differ in size");
    const int b = k.b;
    if (b < 4) throw std::runtime_error("hsic1: needs batch >= 4, got " + std::to_string(b));

    if (rule == DiagRule::MatrixProduct)
        return hsic1_generic(product_tilde(k), product_tilde(l), b);

    // entrywise zero-diagonal reading; symmetric inputs let every term reduce
    // to row sums
    const TildeSums tk = tilde_sums(k);
    const TildeSums tl = tilde_sums(l);
    double trace = 0.0;
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            if (j != i) trace += k.at(i, j) * l.at(i, j);
    double cross = 0.0;
    for (int i = 0; i < b; ++i) cross += tk.row_sums[static_cast<size_t>(i)] * tl.row_sums[static_cast<size_t>(i)];
    const double bb = static_cast<double>(b);
    return (trace + tk.total * tl.total / ((bb - 1.0) * (bb - 2.0)) - 2.0 * cross / (bb - 2.0)) /
           (bb * (bb - 3.0));
}

double cka(const GramMatrix& k, const GramMatrix& l, DiagRule rule) {
    const double kk = hsic1(k, k, rule);
    const double ll = hsic1(l, l, rule);
    if (kk <= 0.0 || ll <= 0.0)
        throw std::runtime_error("cka: degenerate features (self-similarity not positive)");
    const double raw = hsic1(k, l, rule) / std::sqrt(kk * ll);
    return std::clamp(raw, -1.0, 1.0);
}

double cosine_of(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::runtime_error("cosine_of: size mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) throw std::runtime_error("cosine_of: zero vector");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

Metric metric_from_name(const std::string& name) {
    if (name == "cka") return Metric::CKA;
    if (name == "cosine") return Metric::Cosine;
    throw std::runtime_error("unknown similarity metric: " + name);
}

std::string metric_name(Metric m) { return m == Metric::CKA ? "cka" : "cosine"; }

namespace {

std::vector<int> draw_batch(const std::vector<int>& pool, int count, Rng& rng) {
    // partial Fisher-Yates over a copy: without replacement
    std::vector<int> ids = pool;
    for (int i = 0; i < count; ++i) {
        const size_t j = static_cast<size_t>(i) + rng.uniform_int(ids.size() - static_cast<size_t>(i));
        std::swap(ids[static_cast<size_t>(i)], ids[j]);
    }
    ids.resize(static_cast<size_t>(count));
    return ids;
}

std::vector<int> draw_batch_stratified(const signal::SignalDataset& ds, const std::vector<int>& pool,
                                       int count, Rng& rng) {
    std::map<uint16_t, std::vector<int>> by_class;
    for (int idx : pool) by_class[ds.examples[static_cast<size_t>(idx)].label].push_back(idx);
    std::vector<int> out;
    const int per = count / static_cast<int>(by_class.size());
    int extra = count - per * static_cast<int>(by_class.size());
    for (auto& [cls, ids] : by_class) {
        int want = per + (extra > 0 ? 1 : 0);
        if (extra > 0) --extra;
        want = std::min(want, static_cast<int>(ids.size()));
        std::vector<int> take = draw_batch(ids, want, rng);
        out.insert(out.end(), take.begin(), take.end());
    }
    return out;
}

}  // namespace

SimilarityResult similarity_matrix(const ModelGraph& model, const signal::SignalDataset& ds,
                                   const std::vector<int>& pool, const SimilarityOptions& opt) {
    const int l = static_cast<int>(model.units.size());
    if (l < 1) throw std::runtime_error("similarity_matrix: model has no units");
    if (opt.samples_per_batch < 4)
        throw std::runtime_error("similarity_matrix: samples_per_batch must be >= 4");
    if (static_cast<size_t>(opt.samples_per_batch) > pool.size())
        throw std::runtime_error("similarity_matrix: pool smaller than samples_per_batch");
    if (opt.num_batches < 1) throw std::runtime_error("similarity_matrix: num_batches must be >= 1");

    SimilarityResult res;
    res.l = l;
    res.s.assign(static_cast<size_t>(l) * l, 0.0);

    for (int t = 0; t < opt.num_batches; ++t) {
        Rng rng(mix_seed(opt.seed, 0x5e1ec7, static_cast<uint64_t>(t)));
        const std::vector<int> ids = opt.stratified
                                         ? draw_batch_stratified(ds, pool, opt.samples_per_batch, rng)
                                         : draw_batch(pool, opt.samples_per_batch, rng);
        Tensor batch;
        std::vector<int> labels;
        signal::make_batch(ds, ids, 0, ids.size(), batch, labels);
        const std::vector<Tensor> acts = forward_all_units(model, batch);

        std::vector<GramMatrix> grams(static_cast<size_t>(l));
        for (int i = 0; i < l; ++i) grams[static_cast<size_t>(i)] = gram_matrix(flatten_features(acts[static_cast<size_t>(i)]));

        if (opt.metric == Metric::CKA) {
            std::vector<double> self(static_cast<size_t>(l));
            for (int i = 0; i < l; ++i) {
                self[static_cast<size_t>(i)] = hsic1(grams[static_cast<size_t>(i)], grams[static_cast<size_t>(i)]);
                if (self[static_cast<size_t>(i)] <= 0.0)
                    throw std::runtime_error("similarity_matrix: degenerate features at unit " + std::to_string(i));
            }
            // upper triangle in parallel; entries land at fixed indices so the
            // schedule cannot reorder results
            std::vector<std::pair<int, int>> pairs;
            for (int i = 0; i < l; ++i)
                for (int j = i; j < l; ++j) pairs.emplace_back(i, j);
#pragma omp parallel for schedule(dynamic)
            for (size_t pi = 0; pi < pairs.size(); ++pi) {
                const auto [i, j] = pairs[pi];
                const double h = hsic1(grams[static_cast<size_t>(i)], grams[static_cast<size_t>(j)]);
                const double v = std::clamp(h / std::sqrt(self[static_cast<size_t>(i)] * self[static_cast<size_t>(j)]), -1.0, 1.0);
                res.s[static_cast<size_t>(i) * l + j] += v;
                if (i != j) res.s[static_cast<size_t>(j) * l + i] += v;
            }
        } else {
            std::vector<std::pair<int, int>> pairs;
            for (int i = 0; i < l; ++i)
                for (int j = i; j < l; ++j) pairs.emplace_back(i, j);
#pragma omp parallel for schedule(dynamic)
            for (size_t pi = 0; pi < pairs.size(); ++pi) {
                const auto [i, j] = pairs[pi];
                const double v = cosine_of(grams[static_cast<size_t>(i)].k, grams[static_cast<size_t>(j)].k);
                res.s[static_cast<size_t>(i) * l + j] += v;
                if (i != j) res.s[static_cast<size_t>(j) * l + i] += v;
            }
        }
    }

    for (double& v : res.s) v /= opt.num_batches;
    res.z.assign(static_cast<size_t>(l), 0.0);
    for (int i = 0; i < l; ++i) {
        double r = 0.0;
        for (int j = 0; j < l; ++j) r += res.s_at(i, j);
        res.z[static_cast<size_t>(i)] = r;
    }
    return res;
}

void save_matrix_csv(const std::vector<double>& m, int rows, int cols, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.precision(17);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            if (j) out << ',';
            out << m[static_cast<size_t>(i) * cols + j];
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void save_z_csv(const std::vector<double>& z, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.precision(17);
    out << "unit,z\n";
    for (size_t i = 0; i < z.size(); ++i) out << i << ',' << z[i] << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<double> load_z_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    std::vector<double> z;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("unit,", 0) == 0) continue;
        }
        const size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("malformed row in " + path + ": " + line);
        z.push_back(std::stod(line.substr(comma + 1)));
    }
    if (z.empty()) throw std::runtime_error("no values in " + path);
    return z;
}

}  // namespace lprune::similarity
