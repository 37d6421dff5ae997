#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lprune/rng.hpp"
#include "lprune/tensor.hpp"

namespace lprune::signal {

enum class ModScheme { BPSK, QPSK, PSK8, PAM4, QAM16, FSK2, CPFSK };

ModScheme scheme_from_name(const std::string& name);  // throws on unknown name
std::string scheme_name(ModScheme s);
int symbol_cardinality(ModScheme s);

// snr_db value meaning "add no noise"
constexpr int kNoNoiseSnr = std::numeric_limits<int16_t>::max();

// Rectangular-pulse baseband modulation: each symbol held for sps samples.
// Constellations are scaled to unit mean symbol energy. FSK2 restarts its
// tone phase at each symbol boundary; CPFSK accumulates phase continuously.
std::vector<std::complex<float>> modulate(ModScheme scheme, const std::vector<int>& symbols, int sps);

// Adds circular complex Gaussian noise with per-component variance
// sigma^2 = P_signal / (2 * 10^(snr_db/10)), P_signal measured from the input.
void apply_awgn(std::vector<std::complex<float>>& x, double snr_db, Rng& rng);

struct SignalExample {
    std::vector<float> i;
    std::vector<float> q;
    uint16_t label = 0;
    int16_t snr_db = 0;
};

struct SignalDataset {
    int signal_length = 0;
    int num_classes = 0;
    std::vector<SignalExample> examples;
};

struct GenOptions {
    std::vector<ModScheme> schemes;
    std::vector<int> snrs_db;
    int examples_per_class_per_snr = 100;
    int signal_length = 128;
    int sps = 8;
};

// Synthesizes one example per (class, snr, index) triple with a generator
// seeded by mix_seed(master_seed, class, snr): output bytes are independent
// of the parallel schedule. Each example is normalized to unit average power
// before noise is added, and again after.
SignalDataset generate_dataset(const GenOptions& opt, uint64_t master_seed);

// Binary dataset format, little-endian:
//   magic "AMRD", u32 version = 1, u32 record_count, u32 signal_length,
//   u16 num_classes, then per record: u16 label, i16 snr_db,
//   signal_length I samples then signal_length Q samples (f32)
void save_dataset(const SignalDataset& ds, const std::string& path);
SignalDataset load_dataset(const std::string& path);

struct Split {
    std::vector<int> train;  // example indices into SignalDataset::examples
    std::vector<int> val;
    std::vector<int> test;
};

// Stratified by (label, snr) cell: each cell is shuffled with its own derived
// seed and divided by the ratios (train gets the remainder of exact division).
Split split_dataset(const SignalDataset& ds, double train_ratio, double val_ratio,
                    double test_ratio, uint64_t seed);

// Assembles examples[indices[first .. first+count)] into a (count, 2, len)
// batch (row 0: I, row 1: Q) plus labels.
void make_batch(const SignalDataset& ds, const std::vector<int>& indices, size_t first,
                size_t count, Tensor& batch, std::vector<int>& labels);

double mean_power(const std::vector<std::complex<float>>& x);

}  // namespace lprune::signal
