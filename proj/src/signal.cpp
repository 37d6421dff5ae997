#include "lprune/signal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

namespace lprune::signal {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'R', 'D'};
constexpr uint32_t kVersion = 1;

const std::pair<const char*, ModScheme> kSchemeTable[] = {
    {"bpsk", ModScheme::BPSK},   {"qpsk", ModScheme::QPSK}, {"8psk", ModScheme::PSK8},
    {"pam4", ModScheme::PAM4},   {"qam16", ModScheme::QAM16}, {"2fsk", ModScheme::FSK2},
    {"cpfsk", ModScheme::CPFSK},
};

}  // namespace

ModScheme scheme_from_name(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& [n, s] : kSchemeTable)
        if (lower == n) return s;
    throw std::runtime_error("unknown modulation scheme: " + name);
}

std::string scheme_name(ModScheme s) {
    for (const auto& [n, sch] : kSchemeTable)
        if (sch == s) return n;
    return "?";
}

int symbol_cardinality(ModScheme s) {
    switch (s) {
        case ModScheme::BPSK:
        case ModScheme::FSK2:
        case ModScheme::CPFSK:
            return 2;
        case ModScheme::QPSK:
        case ModScheme::PAM4:
            return 4;
        case ModScheme::PSK8:
            return 8;
        case ModScheme::QAM16:
            return 16;
    }
    return 0;
}

std::vector<std::complex<float>> modulate(ModScheme scheme, const std::vector<int>& symbols, int sps) {
    if (sps <= 0) throw std::runtime_error("modulate: sps must be positive");
    const int card = symbol_cardinality(scheme);
    for (int s : symbols)
        if (s < 0 || s >= card)
            throw std::runtime_error("modulate: symbol " + std::to_string(s) + " out of range for " + scheme_name(scheme));

    std::vector<std::complex<float>> out;
    out.reserve(symbols.size() * static_cast<size_t>(sps));
    constexpr double pi = std::numbers::pi;

    switch (scheme) {
        case ModScheme::BPSK:
            for (int s : symbols) {
                const float v = s == 0 ? 1.0f : -1.0f;
                for (int k = 0; k < sps; ++k) out.emplace_back(v, 0.0f);
            }
            break;
        case ModScheme::QPSK:
            for (int s : symbols) {
                const double ph = pi / 4.0 + s * pi / 2.0;
                const std::complex<float> v(static_cast<float>(std::cos(ph)), static_cast<float>(std::sin(ph)));
                for (int k = 0; k < sps; ++k) out.push_back(v);
            }
            break;
        case ModScheme::PSK8:
            for (int s : symbols) {
                const double ph = 2.0 * pi * s / 8.0;
                const std::complex<float> v(static_cast<float>(std::cos(ph)), static_cast<float>(std::sin(ph)));
                for (int k = 0; k < sps; ++k) out.push_back(v);
            }
            break;
        case ModScheme::PAM4: {
            // levels {-3,-1,1,3} scaled so mean symbol energy is 1
            const float scale = 1.0f / std::sqrt(5.0f);
            for (int s : symbols) {
                const float v = static_cast<float>(2 * s - 3) * scale;
                for (int k = 0; k < sps; ++k) out.emplace_back(v, 0.0f);
            }
            break;
        }
        case ModScheme::QAM16: {
            // 4x4 grid on {-3,-1,1,3}^2, mean symbol energy 10 before scaling
            const float scale = 1.0f / std::sqrt(10.0f);
            for (int s : symbols) {
                const float re = static_cast<float>(2 * (s % 4) - 3) * scale;
                const float im = static_cast<float>(2 * (s / 4) - 3) * scale;
                for (int k = 0; k < sps; ++k) out.emplace_back(re, im);
            }
            break;
        }
        case ModScheme::FSK2:
            // tone at -+ 1/(2*sps) cycles/sample, phase restarted per symbol
            for (int s : symbols) {
                const double dphi = (s == 0 ? -1.0 : 1.0) * pi / sps;
                for (int k = 0; k < sps; ++k) {
                    const double ph = dphi * k;
                    out.emplace_back(static_cast<float>(std::cos(ph)), static_cast<float>(std::sin(ph)));
                }
            }
            break;
        case ModScheme::CPFSK: {
            // same tones, phase accumulated across symbol boundaries
            double phase = 0.0;
            for (int s : symbols) {
                const double dphi = (s == 0 ? -1.0 : 1.0) * pi / sps;
                for (int k = 0; k < sps; ++k) {
                    out.emplace_back(static_cast<float>(std::cos(phase)), static_cast<float>(std::sin(phase)));
                    phase += dphi;
                    if (phase > 2.0 * pi) phase -= 2.0 * pi;
                    if (phase < -2.0 * pi) phase += 2.0 * pi;
                }
            }
            break;
        }
    }
    return out;
}

double mean_power(const std::vector<std::complex<float>>& x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& v : x)
        acc += static_cast<double>(v.real()) * v.real() + static_cast<double>(v.imag()) * v.imag();
    return acc / static_cast<double>(x.size());
}

void apply_awgn(std::vector<std::complex<float>>& x, double snr_db, Rng& rng) {
    if (snr_db >= kNoNoiseSnr) return;
    const double p = mean_power(x);
    const double sigma = std::sqrt(p / (2.0 * std::pow(10.0, snr_db / 10.0)));
    for (auto& v : x)
        v += std::complex<float>(static_cast<float>(sigma * rng.normal()),
                                 static_cast<float>(sigma * rng.normal()));
}

namespace {

void normalize_power(std::vector<std::complex<float>>& x) {
    const double p = mean_power(x);
    if (p <= 0.0) return;
    const float s = static_cast<float>(1.0 / std::sqrt(p));
    for (auto& v : x) v *= s;
}

SignalExample synth_example(ModScheme scheme, int snr_db, int length, int sps, Rng& rng) {
    const int card = symbol_cardinality(scheme);
    const int n_sym = (length + sps - 1) / sps;
    std::vector<int> symbols(static_cast<size_t>(n_sym));
    for (int& s : symbols) s = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(card)));
    std::vector<std::complex<float>> samples = modulate(scheme, symbols, sps);
    samples.resize(static_cast<size_t>(length));
    normalize_power(samples);
    apply_awgn(samples, snr_db, rng);
    normalize_power(samples);
    SignalExample ex;
    ex.i.resize(static_cast<size_t>(length));
    ex.q.resize(static_cast<size_t>(length));
    for (int t = 0; t < length; ++t) {
        ex.i[static_cast<size_t>(t)] = samples[static_cast<size_t>(t)].real();
        ex.q[static_cast<size_t>(t)] = samples[static_cast<size_t>(t)].imag();
    }
    return ex;
}

}  // namespace

SignalDataset generate_dataset(const GenOptions& opt, uint64_t master_seed) {
    if (opt.schemes.empty() || opt.snrs_db.empty())
        throw std::runtime_error("generate_dataset: need at least one scheme and one snr");
    if (opt.examples_per_class_per_snr <= 0 || opt.signal_length <= 0)
        throw std::runtime_error("generate_dataset: counts must be positive");

    SignalDataset ds;
    ds.signal_length = opt.signal_length;
    ds.num_classes = static_cast<int>(opt.schemes.size());
    const int n_cells = static_cast<int>(opt.schemes.size() * opt.snrs_db.size());
    const int per_cell = opt.examples_per_class_per_snr;
    ds.examples.resize(static_cast<size_t>(n_cells) * per_cell);

#pragma omp parallel for schedule(dynamic)
    for (int cell = 0; cell < n_cells; ++cell) {
        const int cls = cell / static_cast<int>(opt.snrs_db.size());
        const int snr = opt.snrs_db[static_cast<size_t>(cell) % opt.snrs_db.size()];
        Rng rng(mix_seed(master_seed, static_cast<uint64_t>(cls),
                         static_cast<uint64_t>(static_cast<int64_t>(snr))));
        for (int e = 0; e < per_cell; ++e) {
            SignalExample ex = synth_example(opt.schemes[static_cast<size_t>(cls)], snr,
                                             opt.signal_length, opt.sps, rng);
            ex.label = static_cast<uint16_t>(cls);
            ex.snr_db = static_cast<int16_t>(snr);
            ds.examples[static_cast<size_t>(cell) * per_cell + e] = std::move(ex);
        }
    }
    return ds;
}

void save_dataset(const SignalDataset& ds, const std::string& path) {
    static_assert(std::endian::native == std::endian::little);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    auto put = [&out](const void* p, size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
    put(kMagic, 4);
    const uint32_t version = kVersion;
    const uint32_t count = static_cast<uint32_t>(ds.examples.size());
    const uint32_t length = static_cast<uint32_t>(ds.signal_length);
    const uint16_t classes = static_cast<uint16_t>(ds.num_classes);
    put(&version, 4);
    put(&count, 4);
    put(&length, 4);
    put(&classes, 2);
    for (const SignalExample& ex : ds.examples) {
        put(&ex.label, 2);
        put(&ex.snr_db, 2);
        put(ex.i.data(), ex.i.size() * sizeof(float));
        put(ex.q.data(), ex.q.size() * sizeof(float));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

SignalDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    auto get = [&in, &path](void* p, size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n))
            throw std::runtime_error("truncated dataset file: " + path);
    };
    char magic[4];
    get(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad magic in " + path + " (expected AMRD)");
    uint32_t version, count, length;
    uint16_t classes;
    get(&version, 4);
    if (version != kVersion)
        throw std::runtime_error("unsupported dataset version " + std::to_string(version) + " in " + path);
    get(&count, 4);
    get(&length, 4);
    get(&classes, 2);
    SignalDataset ds;
    ds.signal_length = static_cast<int>(length);
    ds.num_classes = static_cast<int>(classes);
    ds.examples.resize(count);
    for (SignalExample& ex : ds.examples) {
        get(&ex.label, 2);
        get(&ex.snr_db, 2);
        if (ex.label >= classes)
            throw std::runtime_error("label out of range in " + path);
        ex.i.resize(length);
        ex.q.resize(length);
        get(ex.i.data(), length * sizeof(float));
        get(ex.q.data(), length * sizeof(float));
    }
    return ds;
}

Split split_dataset(const SignalDataset& ds, double train_ratio, double val_ratio,
                    double test_ratio, uint64_t seed) {
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 ||
        std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw std::runtime_error("split: ratios must be non-negative and sum to 1");
    std::map<std::pair<uint16_t, int16_t>, std::vector<int>> cells;
    for (size_t i = 0; i < ds.examples.size(); ++i)
        cells[{ds.examples[i].label, ds.examples[i].snr_db}].push_back(static_cast<int>(i));

    Split split;
    for (auto& [key, idx] : cells) {
        Rng rng(mix_seed(seed, key.first, static_cast<uint64_t>(static_cast<int64_t>(key.second))));
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
        const size_t n = idx.size();
        const size_t n_val = static_cast<size_t>(std::floor(val_ratio * static_cast<double>(n)));
        const size_t n_test = static_cast<size_t>(std::floor(test_ratio * static_cast<double>(n)));
        const size_t n_train = n - n_val - n_test;
        split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<long>(n_train));
        split.val.insert(split.val.end(), idx.begin() + static_cast<long>(n_train),
                         idx.begin() + static_cast<long>(n_train + n_val));
        split.test.insert(split.test.end(), idx.begin() + static_cast<long>(n_train + n_val), idx.end());
    }
    return split;
}

void make_batch(const SignalDataset& ds, const std::vector<int>& indices, size_t first,
                size_t count, Tensor& batch, std::vector<int>& labels) {
    const int len = ds.signal_length;
    batch = Tensor::zeros({static_cast<int>(count), 2, len});
    labels.resize(count);
    for (size_t n = 0; n < count; ++n) {
        const SignalExample& ex = ds.examples[static_cast<size_t>(indices[first + n])];
        float* row = batch.ptr() + static_cast<int64_t>(n) * 2 * len;
        std::memcpy(row, ex.i.data(), static_cast<size_t>(len) * sizeof(float));
        std::memcpy(row + len, ex.q.data(), static_cast<size_t>(len) * sizeof(float));
        labels[n] = ex.label;
    }
}

}  // namespace lprune::signal
