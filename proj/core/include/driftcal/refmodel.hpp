#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftcal/types.hpp"

namespace driftcal {

// Hyperparameters of the reference classifier. The architecture is
// embedding -> mean pool over the context window -> layer_count dense+ReLU
// hidden layers -> linear head over the vocabulary.
struct ModelConfig {
    int vocab_size = 0;
    int context_len = 16;
    int hidden_dim = 64;
    int layer_count = 4;
    double dropout_rate = 0.1;
    std::uint32_t seed = 1;
    double learning_rate = 0.2;
    int epochs = 15;
    int batch_size = 32;

    void validate() const;
};

// One dense layer; weights are row-major with one row per output neuron.
struct DenseLayer {
    std::vector<double> weights;  // out_dim x in_dim
    std::vector<double> bias;     // out_dim

    bool operator==(const DenseLayer&) const = default;
};

// Full parameter state of a trained model. Immutable after training; the
// mutation operators return modified copies.
struct Checkpoint {
    std::vector<DenseLayer> layers;  // layer_count hidden layers, input to output
    std::vector<double> embedding;   // vocab_size x hidden_dim
    DenseLayer head;                 // vocab_size x hidden_dim
    ModelConfig config;
    std::uint32_t train_seed = 0;
    double dev_accuracy = 0.0;

    bool operator==(const Checkpoint&) const = default;
};

// Single-sample forward result: output logits plus the post-nonlinearity
// activation of every hidden layer (exactly the vectors the next layer
// consumed, so dropout masks are reflected when active).
struct ForwardTrace {
    std::vector<double> logits;
    std::vector<std::vector<double>> layer_activations;
};

enum class MutationOperator { GF, WS, NS, NAI };

MutationOperator mutation_operator_from_string(const std::string& name);
std::string to_string(MutationOperator op);

// Trains with plain mini-batch SGD and cross-entropy loss. Deterministic:
// two calls with identical (config, data) produce bitwise-equal checkpoints.
// Throws std::invalid_argument on empty splits or out-of-range targets and
// TrainingFailure if the loss goes non-finite.
Checkpoint train(const ModelConfig& config,
                 const std::vector<TokenSequence>& train_set,
                 const std::vector<TokenSequence>& dev_set);

// dropout_on applies inverted dropout at config.dropout_rate, seeded by
// rng_seed; with dropout off the pass is deterministic and rng_seed is
// ignored. Pools over the last config.context_len tokens.
ForwardTrace forward(const Checkpoint& ckpt, const TokenSequence& seq,
                     bool dropout_on = false, std::uint64_t rng_seed = 0);

// Logits for a whole split, parallel across samples. Each sample uses the
// same dropout seed, so one call corresponds to one sampled subnetwork.
LogitMatrix batch_logits(const Checkpoint& ckpt,
                         const std::vector<TokenSequence>& split,
                         bool dropout_on = false, std::uint64_t rng_seed = 0);

// Post-ReLU activations of one hidden layer for a whole split (dropout off).
std::vector<std::vector<double>> batch_activations(
    const Checkpoint& ckpt, const std::vector<TokenSequence>& split, int layer);

// Returns a mutated copy; the source checkpoint is untouched.
//   GF  - Gaussian noise (sigma = gf_sigma * per-tensor weight std) added to
//         a ratio-fraction of the weights of every weight matrix.
//   WS  - per hidden layer, shuffles the incoming-weight vector of a
//         ratio-fraction of neurons.
//   NS  - per hidden layer, swaps two random neurons: incoming rows, biases
//         and outgoing columns. Function-preserving by construction.
//   NAI - per hidden layer, negates incoming row and bias of a
//         ratio-fraction of neurons, flipping their activation status.
Checkpoint mutate(const Checkpoint& ckpt, MutationOperator op, double ratio,
                  std::uint64_t seed, double gf_sigma = 0.1);

// Flat binary container: magic "DCKP", version, config header, then
// row-major little-endian f64 tensors. Round-trips bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace driftcal
