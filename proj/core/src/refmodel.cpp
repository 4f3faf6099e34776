#include "driftcal/refmodel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "driftcal/errors.hpp"
#include "driftcal/parallel.hpp"
#include "driftcal/rng.hpp"

namespace driftcal {

void ModelConfig::validate() const {
    if (vocab_size < 2) throw std::invalid_argument("vocab_size must be at least 2");
    if (context_len < 1) throw std::invalid_argument("context_len must be positive");
    if (hidden_dim < 2) throw std::invalid_argument("hidden_dim must be at least 2");
    if (layer_count < 2) throw std::invalid_argument("layer_count must be at least 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw std::invalid_argument("dropout_rate must lie in [0,1)");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (epochs < 1) throw std::invalid_argument("epochs must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
}

MutationOperator mutation_operator_from_string(const std::string& name) {
    if (name == "gf" || name == "GF") return MutationOperator::GF;
    if (name == "ws" || name == "WS") return MutationOperator::WS;
    if (name == "ns" || name == "NS") return MutationOperator::NS;
    if (name == "nai" || name == "NAI") return MutationOperator::NAI;
    throw std::invalid_argument("unknown mutation operator: " + name);
}

std::string to_string(MutationOperator op) {
    switch (op) {
        case MutationOperator::GF: return "gf";
        case MutationOperator::WS: return "ws";
        case MutationOperator::NS: return "ns";
        case MutationOperator::NAI: return "nai";
    }
    return "?";
}

namespace {

void check_tokens(const TokenSequence& seq, int vocab_size) {
    if (seq.tokens.empty()) throw std::invalid_argument("token sequence is empty");
    for (int t : seq.tokens) {
        if (t < 0 || t >= vocab_size) {
            throw std::invalid_argument("token index out of vocabulary range");
        }
    }
}

// Mean of the embeddings of the last context_len tokens.
void pool_context(const Checkpoint& ckpt, const TokenSequence& seq, double* out) {
    const int h = ckpt.config.hidden_dim;
    const std::size_t len = seq.tokens.size();
    const std::size_t window = std::min<std::size_t>(len, ckpt.config.context_len);
    const std::size_t start = len - window;
    std::fill(out, out + h, 0.0);
    for (std::size_t i = start; i < len; ++i) {
        const double* row = ckpt.embedding.data() + static_cast<std::size_t>(seq.tokens[i]) * h;
        for (int k = 0; k < h; ++k) out[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(window);
    for (int k = 0; k < h; ++k) out[k] *= inv;
}

void dense_forward(const DenseLayer& layer, const double* in, std::size_t in_dim,
                   double* out, std::size_t out_dim) {
    for (std::size_t r = 0; r < out_dim; ++r) {
        const double* w = layer.weights.data() + r * in_dim;
        double acc = layer.bias[r];
        for (std::size_t k = 0; k < in_dim; ++k) acc += w[k] * in[k];
        out[r] = acc;
    }
}

struct DropoutState {
    bool on = false;
    double rate = 0.0;
    Rng rng{0};
};

// Runs the hidden stack in place over `act`, capturing per-layer copies when
// `trace` is non-null.
void run_hidden(const Checkpoint& ckpt, std::vector<double>& act,
                DropoutState* drop, ForwardTrace* trace) {
    const int h = ckpt.config.hidden_dim;
    std::vector<double> next(h);
    for (const DenseLayer& layer : ckpt.layers) {
        dense_forward(layer, act.data(), h, next.data(), h);
        for (int k = 0; k < h; ++k) next[k] = next[k] > 0.0 ? next[k] : 0.0;
        if (drop && drop->on && drop->rate > 0.0) {
            const double scale = 1.0 / (1.0 - drop->rate);
            for (int k = 0; k < h; ++k) {
                next[k] = drop->rng.uniform() <= drop->rate ? 0.0 : next[k] * scale;
            }
        }
        act = next;
        if (trace) trace->layer_activations.push_back(act);
    }
}

}  // namespace

ForwardTrace forward(const Checkpoint& ckpt, const TokenSequence& seq,
                     bool dropout_on, std::uint64_t rng_seed) {
    check_tokens(seq, ckpt.config.vocab_size);
    const int h = ckpt.config.hidden_dim;
    ForwardTrace trace;
    trace.layer_activations.reserve(ckpt.layers.size());
    std::vector<double> act(h);
    pool_context(ckpt, seq, act.data());
    DropoutState drop{dropout_on, ckpt.config.dropout_rate, Rng(rng_seed)};
    run_hidden(ckpt, act, &drop, &trace);
    trace.logits.resize(ckpt.config.vocab_size);
    dense_forward(ckpt.head, act.data(), h, trace.logits.data(), ckpt.config.vocab_size);
    return trace;
}

LogitMatrix batch_logits(const Checkpoint& ckpt, const std::vector<TokenSequence>& split,
                         bool dropout_on, std::uint64_t rng_seed) {
    if (split.empty()) throw std::invalid_argument("batch_logits on an empty split");
    const std::size_t c = ckpt.config.vocab_size;
    std::vector<double> out(split.size() * c);
    parallel_for(split.size(), [&](std::size_t i) {
        ForwardTrace t = forward(ckpt, split[i], dropout_on, rng_seed);
        std::copy(t.logits.begin(), t.logits.end(), out.begin() + i * c);
    });
    return LogitMatrix::from_data(split.size(), c, std::move(out));
}

std::vector<std::vector<double>> batch_activations(const Checkpoint& ckpt,
                                                   const std::vector<TokenSequence>& split,
                                                   int layer) {
    if (layer < 0 || layer >= ckpt.config.layer_count) {
        throw std::invalid_argument("tap layer out of range");
    }
    std::vector<std::vector<double>> acts(split.size());
    parallel_for(split.size(), [&](std::size_t i) {
        ForwardTrace t = forward(ckpt, split[i], false, 0);
        acts[i] = std::move(t.layer_activations[layer]);
    });
    return acts;
}

namespace {

struct TrainBuffers {
    std::vector<double> pooled;
    std::vector<std::vector<double>> pre;    // pre-ReLU per layer
    std::vector<std::vector<double>> act;    // post-ReLU (and mask) per layer
    std::vector<std::vector<double>> mask;   // dropout keep-scale per layer
    std::vector<double> logits;
    std::vector<double> probs;
};

struct Gradients {
    std::vector<DenseLayer> layers;
    std::vector<double> embedding;
    DenseLayer head;

    void zero() {
        for (auto& l : layers) {
            std::fill(l.weights.begin(), l.weights.end(), 0.0);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
        std::fill(embedding.begin(), embedding.end(), 0.0);
        std::fill(head.weights.begin(), head.weights.end(), 0.0);
        std::fill(head.bias.begin(), head.bias.end(), 0.0);
    }
};

double xavier_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Checkpoint init_checkpoint(const ModelConfig& config, Rng& rng) {
    Checkpoint ckpt;
    ckpt.config = config;
    const std::size_t h = config.hidden_dim;
    const std::size_t v = config.vocab_size;
    ckpt.embedding.resize(v * h);
    for (double& w : ckpt.embedding) w = rng.uniform(-0.5, 0.5);
    ckpt.layers.resize(config.layer_count);
    const double lim = xavier_limit(h, h);
    for (auto& layer : ckpt.layers) {
        layer.weights.resize(h * h);
        layer.bias.assign(h, 0.0);
        for (double& w : layer.weights) w = rng.uniform(-lim, lim);
    }
    const double head_lim = xavier_limit(h, v);
    ckpt.head.weights.resize(v * h);
    ckpt.head.bias.assign(v, 0.0);
    for (double& w : ckpt.head.weights) w = rng.uniform(-head_lim, head_lim);
    return ckpt;
}

// Forward with dropout masks recorded, then cross-entropy backward.
// Returns the sample loss; gradients accumulate into `grad`.
double train_step(const Checkpoint& ckpt, const TokenSequence& seq, Rng& rng,
                  TrainBuffers& buf, Gradients& grad) {
    const int h = ckpt.config.hidden_dim;
    const int v = ckpt.config.vocab_size;
    const int L = ckpt.config.layer_count;
    const double rate = ckpt.config.dropout_rate;

    buf.pooled.resize(h);
    pool_context(ckpt, seq, buf.pooled.data());
    buf.pre.resize(L);
    buf.act.resize(L);
    buf.mask.resize(L);

    const double* in = buf.pooled.data();
    for (int l = 0; l < L; ++l) {
        buf.pre[l].resize(h);
        buf.act[l].resize(h);
        buf.mask[l].resize(h);
        dense_forward(ckpt.layers[l], in, h, buf.pre[l].data(), h);
        const double scale = rate > 0.0 ? 1.0 / (1.0 - rate) : 1.0;
        for (int k = 0; k < h; ++k) {
            double a = buf.pre[l][k] > 0.0 ? buf.pre[l][k] : 0.0;
            double m = 1.0;
            if (rate > 0.0) m = rng.uniform() <= rate ? 0.0 : scale;
            buf.mask[l][k] = m;
            buf.act[l][k] = a * m;
        }
        in = buf.act[l].data();
    }

    buf.logits.resize(v);
    dense_forward(ckpt.head, in, h, buf.logits.data(), v);

    // softmax + cross-entropy
    buf.probs.resize(v);
    double mx = buf.logits[0];
    for (int c = 1; c < v; ++c) mx = std::max(mx, buf.logits[c]);
    double sum = 0.0;
    for (int c = 0; c < v; ++c) {
        buf.probs[c] = std::exp(buf.logits[c] - mx);
        sum += buf.probs[c];
    }
    for (int c = 0; c < v; ++c) buf.probs[c] /= sum;
    const double loss = -std::log(std::max(buf.probs[seq.target], 1e-300));

    // dlogits = probs - onehot(target)
    std::vector<double>& dlogits = buf.probs;
    dlogits[seq.target] -= 1.0;

    std::vector<double> dact(h, 0.0);
    const double* last_act = buf.act[L - 1].data();
    for (int c = 0; c < v; ++c) {
        const double g = dlogits[c];
        grad.head.bias[c] += g;
        double* gw = grad.head.weights.data() + static_cast<std::size_t>(c) * h;
        const double* w = ckpt.head.weights.data() + static_cast<std::size_t>(c) * h;
        for (int k = 0; k < h; ++k) {
            gw[k] += g * last_act[k];
            dact[k] += g * w[k];
        }
    }

    std::vector<double> dprev(h);
    for (int l = L - 1; l >= 0; --l) {
        const double* prev_act = l > 0 ? buf.act[l - 1].data() : buf.pooled.data();
        std::fill(dprev.begin(), dprev.end(), 0.0);
        for (int r = 0; r < h; ++r) {
            double g = dact[r] * buf.mask[l][r];
            if (buf.pre[l][r] <= 0.0) g = 0.0;
            if (g == 0.0) continue;
            grad.layers[l].bias[r] += g;
            double* gw = grad.layers[l].weights.data() + static_cast<std::size_t>(r) * h;
            const double* w = ckpt.layers[l].weights.data() + static_cast<std::size_t>(r) * h;
            for (int k = 0; k < h; ++k) {
                gw[k] += g * prev_act[k];
                dprev[k] += g * w[k];
            }
        }
        std::swap(dact, dprev);
    }

    // distribute the pooled gradient back over the context embeddings
    const std::size_t len = seq.tokens.size();
    const std::size_t window = std::min<std::size_t>(len, ckpt.config.context_len);
    const double inv = 1.0 / static_cast<double>(window);
    for (std::size_t i = len - window; i < len; ++i) {
        double* ge = grad.embedding.data() + static_cast<std::size_t>(seq.tokens[i]) * h;
        for (int k = 0; k < h; ++k) ge[k] += dact[k] * inv;
    }
    return loss;
}

void apply_update(Checkpoint& ckpt, const Gradients& grad, double step) {
    for (std::size_t l = 0; l < ckpt.layers.size(); ++l) {
        auto& layer = ckpt.layers[l];
        const auto& g = grad.layers[l];
        for (std::size_t i = 0; i < layer.weights.size(); ++i) layer.weights[i] -= step * g.weights[i];
        for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= step * g.bias[i];
    }
    for (std::size_t i = 0; i < ckpt.embedding.size(); ++i) ckpt.embedding[i] -= step * grad.embedding[i];
    for (std::size_t i = 0; i < ckpt.head.weights.size(); ++i) ckpt.head.weights[i] -= step * grad.head.weights[i];
    for (std::size_t i = 0; i < ckpt.head.bias.size(); ++i) ckpt.head.bias[i] -= step * grad.head.bias[i];
}

}  // namespace

Checkpoint train(const ModelConfig& config, const std::vector<TokenSequence>& train_set,
                 const std::vector<TokenSequence>& dev_set) {
    config.validate();
    if (train_set.empty()) throw std::invalid_argument("training split is empty");
    if (dev_set.empty()) throw std::invalid_argument("dev split is empty");
    for (const auto& seq : train_set) {
        check_tokens(seq, config.vocab_size);
        if (seq.target < 0 || seq.target >= config.vocab_size) {
            throw std::invalid_argument("training target out of vocabulary range");
        }
    }
    for (const auto& seq : dev_set) {
        check_tokens(seq, config.vocab_size);
        if (seq.target < 0 || seq.target >= config.vocab_size) {
            throw std::invalid_argument("dev target out of vocabulary range");
        }
    }

    // Single-threaded throughout: parameter state must be bitwise
    // reproducible from (config, data, seed) alone.
    Rng rng(config.seed);
    Checkpoint ckpt = init_checkpoint(config, rng);
    ckpt.train_seed = config.seed;

    Gradients grad;
    grad.layers = ckpt.layers;
    grad.embedding = ckpt.embedding;
    grad.head = ckpt.head;

    TrainBuffers buf;
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            grad.zero();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                batch_loss += train_step(ckpt, train_set[order[i]], rng, buf, grad);
            }
            if (!std::isfinite(batch_loss)) {
                throw TrainingFailure("non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(start / config.batch_size));
            }
            apply_update(ckpt, grad, config.learning_rate / static_cast<double>(end - start));
        }
    }

    std::size_t hits = 0;
    for (const auto& seq : dev_set) {
        ForwardTrace t = forward(ckpt, seq, false, 0);
        if (static_cast<int>(argmax_row(t.logits)) == seq.target) ++hits;
    }
    ckpt.dev_accuracy = static_cast<double>(hits) / static_cast<double>(dev_set.size());
    return ckpt;
}

namespace {

double tensor_std(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
}

std::size_t selection_count(double ratio, std::size_t n) {
    auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n);
}

void gaussian_fuzz(std::vector<double>& weights, double ratio, double sigma_scale, Rng& rng) {
    const double sigma = sigma_scale * tensor_std(weights);
    const std::size_t count = selection_count(ratio, weights.size());
    for (std::size_t idx : rng.sample_indices(weights.size(), count)) {
        weights[idx] += rng.normal() * sigma;
    }
}

// Swap columns i and j of a row-major out_dim x in_dim matrix.
void swap_columns(std::vector<double>& weights, std::size_t in_dim, std::size_t i, std::size_t j) {
    for (std::size_t r = 0; r * in_dim < weights.size(); ++r) {
        std::swap(weights[r * in_dim + i], weights[r * in_dim + j]);
    }
}

}  // namespace

Checkpoint mutate(const Checkpoint& ckpt, MutationOperator op, double ratio,
                  std::uint64_t seed, double gf_sigma) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("mutation ratio must lie in (0,1]");
    }
    Checkpoint out = ckpt;
    Rng rng(seed);
    const std::size_t h = ckpt.config.hidden_dim;

    switch (op) {
        case MutationOperator::GF:
            gaussian_fuzz(out.embedding, ratio, gf_sigma, rng);
            for (auto& layer : out.layers) gaussian_fuzz(layer.weights, ratio, gf_sigma, rng);
            gaussian_fuzz(out.head.weights, ratio, gf_sigma, rng);
            break;

        case MutationOperator::WS:
            for (auto& layer : out.layers) {
                const std::size_t count = selection_count(ratio, h);
                for (std::size_t neuron : rng.sample_indices(h, count)) {
                    rng.shuffle(layer.weights.data() + neuron * h, h);
                }
            }
            break;

        case MutationOperator::NS:
            for (std::size_t l = 0; l < out.layers.size(); ++l) {
                const std::size_t i = rng.below(h);
                std::size_t j = rng.below(h - 1);
                if (j >= i) ++j;
                auto& layer = out.layers[l];
                for (std::size_t k = 0; k < h; ++k) {
                    std::swap(layer.weights[i * h + k], layer.weights[j * h + k]);
                }
                std::swap(layer.bias[i], layer.bias[j]);
                auto& outgoing =
                    l + 1 < out.layers.size() ? out.layers[l + 1].weights : out.head.weights;
                swap_columns(outgoing, h, i, j);
            }
            break;

        case MutationOperator::NAI:
            for (auto& layer : out.layers) {
                const std::size_t count = selection_count(ratio, h);
                for (std::size_t neuron : rng.sample_indices(h, count)) {
                    for (std::size_t k = 0; k < h; ++k) layer.weights[neuron * h + k] *= -1.0;
                    layer.bias[neuron] *= -1.0;
                }
            }
            break;
    }
    return out;
}

// --- serialization -------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void put_tensor(std::vector<std::uint8_t>& out, const std::vector<double>& t) {
    for (double v : t) put_f64(out, v);
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw std::invalid_argument("truncated checkpoint");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(v);
    }
    void tensor(std::vector<double>& t, std::size_t n) {
        t.resize(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = f64();
    }
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    const ModelConfig& c = ckpt.config;
    put_u32(out, static_cast<std::uint32_t>(c.vocab_size));
    put_u32(out, static_cast<std::uint32_t>(c.context_len));
    put_u32(out, static_cast<std::uint32_t>(c.hidden_dim));
    put_u32(out, static_cast<std::uint32_t>(c.layer_count));
    put_f64(out, c.dropout_rate);
    put_u32(out, c.seed);
    put_f64(out, c.learning_rate);
    put_u32(out, static_cast<std::uint32_t>(c.epochs));
    put_u32(out, static_cast<std::uint32_t>(c.batch_size));
    put_u32(out, ckpt.train_seed);
    put_f64(out, ckpt.dev_accuracy);
    for (const auto& layer : ckpt.layers) {
        put_tensor(out, layer.weights);
        put_tensor(out, layer.bias);
    }
    put_tensor(out, ckpt.embedding);
    put_tensor(out, ckpt.head.weights);
    put_tensor(out, ckpt.head.bias);
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    r.need(4);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw std::invalid_argument("bad checkpoint magic");
    }
    r.pos = 4;
    if (r.u32() != kVersion) throw std::invalid_argument("unsupported checkpoint version");

    Checkpoint ckpt;
    ModelConfig& c = ckpt.config;
    c.vocab_size = static_cast<int>(r.u32());
    c.context_len = static_cast<int>(r.u32());
    c.hidden_dim = static_cast<int>(r.u32());
    c.layer_count = static_cast<int>(r.u32());
    c.dropout_rate = r.f64();
    c.seed = r.u32();
    c.learning_rate = r.f64();
    c.epochs = static_cast<int>(r.u32());
    c.batch_size = static_cast<int>(r.u32());
    c.validate();
    ckpt.train_seed = r.u32();
    ckpt.dev_accuracy = r.f64();

    const std::size_t h = c.hidden_dim;
    const std::size_t v = c.vocab_size;
    ckpt.layers.resize(c.layer_count);
    for (auto& layer : ckpt.layers) {
        r.tensor(layer.weights, h * h);
        r.tensor(layer.bias, h);
    }
    r.tensor(ckpt.embedding, v * h);
    r.tensor(ckpt.head.weights, v * h);
    r.tensor(ckpt.head.bias, v);
    if (r.pos != bytes.size()) throw std::invalid_argument("trailing bytes in checkpoint");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    auto bytes = serialize_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace driftcal
