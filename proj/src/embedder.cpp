#include "openset/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "openset/error.hpp"

namespace openset {

std::string_view to_string(Activation a) {
    return a == Activation::relu ? "relu" : "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    throw Error(ErrorCode::invalid_argument, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Mining m) {
    return m == Mining::random ? "random" : "batch_hard";
}

Mining parse_mining(std::string_view name) {
    if (name == "random") return Mining::random;
    if (name == "batch_hard") return Mining::batch_hard;
    throw Error(ErrorCode::invalid_argument,
                "unknown mining mode '" + std::string(name) + "' (expected random|batch_hard)");
}

EmbedderModel::EmbedderModel(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) {
        throw Error(ErrorCode::invalid_argument, "embedder needs at least one layer");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        const std::string where = "layer " + std::to_string(l);
        if (layer.weights.rows == 0 || layer.weights.cols == 0 ||
            layer.weights.data.size() != layer.weights.rows * layer.weights.cols) {
            throw Error(ErrorCode::invalid_data, where + ": malformed weight matrix");
        }
        if (layer.bias.size() != layer.weights.rows) {
            throw Error(ErrorCode::dimension_mismatch, where + ": bias length != rows");
        }
        if (l > 0 && layer.weights.cols != layers_[l - 1].weights.rows) {
            throw Error(ErrorCode::dimension_mismatch, where + ": input dim does not chain");
        }
        if (!all_finite(layer.weights.data) || !all_finite(layer.bias)) {
            throw Error(ErrorCode::numeric, where + ": non-finite parameter");
        }
    }
}

EmbedderModel EmbedderModel::initialize(std::size_t input_dim,
                                        std::span<const std::size_t> hidden,
                                        std::size_t embed_dim, std::uint64_t seed) {
    if (input_dim == 0 || embed_dim == 0) {
        throw Error(ErrorCode::invalid_argument, "embedder dims must be positive");
    }
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(embed_dim);

    Rng rng(seed);
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l];
        const std::size_t fan_out = dims[l + 1];
        if (fan_out == 0) throw Error(ErrorCode::invalid_argument, "hidden width must be positive");
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Layer layer;
        layer.weights = Matrix(fan_out, fan_in);
        for (double& w : layer.weights.data) w = rng.uniform(-limit, limit);
        layer.bias.assign(fan_out, 0.0);
        layer.activation = (l + 2 < dims.size()) ? Activation::relu : Activation::identity;
        layers.push_back(std::move(layer));
    }
    return EmbedderModel(std::move(layers));
}

std::size_t EmbedderModel::input_dim() const {
    return layers_.empty() ? 0 : layers_.front().weights.cols;
}

std::size_t EmbedderModel::embed_dim() const {
    return layers_.empty() ? 0 : layers_.back().weights.rows;
}

std::size_t EmbedderModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weights.data.size() + layer.bias.size();
    return n;
}

namespace {

struct ForwardCache {
    std::vector<Vector> inputs;  // input fed to each layer
    std::vector<Vector> pre;     // pre-activation of each layer
    Vector output;
};

ForwardCache forward_cached(const EmbedderModel& model, std::span<const double> input) {
    require_same_dim(input.size(), model.input_dim(), "embedder forward");
    ForwardCache cache;
    Vector a(input.begin(), input.end());
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& layer = layers[l];
        Vector z(layer.weights.rows);
        for (std::size_t r = 0; r < layer.weights.rows; ++r) {
            double acc = layer.bias[r];
            const auto w = layer.weights.row(r);
            for (std::size_t c = 0; c < w.size(); ++c) acc += w[c] * a[c];
            z[r] = acc;
        }
        if (!all_finite(z)) {
            throw Error(ErrorCode::numeric,
                        "non-finite activation in layer " + std::to_string(l));
        }
        cache.inputs.push_back(std::move(a));
        a = z;
        if (layer.activation == Activation::relu) {
            for (double& v : a) v = v > 0.0 ? v : 0.0;
        }
        cache.pre.push_back(std::move(z));
    }
    cache.output = std::move(a);
    return cache;
}

// Accumulates d(loss)/d(params) given d(loss)/d(output) for one forward pass.
void backward(const EmbedderModel& model, const ForwardCache& cache, Vector dout,
              Gradients& grads) {
    const auto& layers = model.layers();
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Layer& layer = layers[l];
        if (layer.activation == Activation::relu) {
            for (std::size_t r = 0; r < dout.size(); ++r) {
                if (!(cache.pre[l][r] > 0.0)) dout[r] = 0.0;
            }
        }
        Matrix& dw = grads.weights[l];
        Vector& db = grads.biases[l];
        const Vector& in = cache.inputs[l];
        for (std::size_t r = 0; r < layer.weights.rows; ++r) {
            if (dout[r] == 0.0) continue;
            db[r] += dout[r];
            for (std::size_t c = 0; c < layer.weights.cols; ++c) dw(r, c) += dout[r] * in[c];
        }
        if (l == 0) break;
        Vector dprev(layer.weights.cols, 0.0);
        for (std::size_t r = 0; r < layer.weights.rows; ++r) {
            if (dout[r] == 0.0) continue;
            for (std::size_t c = 0; c < layer.weights.cols; ++c) {
                dprev[c] += layer.weights(r, c) * dout[r];
            }
        }
        dout = std::move(dprev);
    }
}

// Gradient of ||x - y||_p with respect to x. Zero where x_i == y_i and when d == 0.
Vector distance_gradient(std::span<const double> x, std::span<const double> y, double d,
                         double p) {
    Vector g(x.size(), 0.0);
    if (d == 0.0) return g;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = x[i] - y[i];
        if (t == 0.0) continue;
        const double sign = t > 0.0 ? 1.0 : -1.0;
        if (p == 1.0) {
            g[i] = sign;
        } else if (p == 2.0) {
            g[i] = t / d;
        } else {
            g[i] = sign * std::pow(std::abs(t) / d, p - 1.0);
        }
    }
    return g;
}

} // namespace

Vector forward(const EmbedderModel& model, std::span<const double> input) {
    return forward_cached(model, input).output;
}

Gradients Gradients::zeros_like(const EmbedderModel& model) {
    Gradients g;
    for (const auto& layer : model.layers()) {
        g.weights.emplace_back(layer.weights.rows, layer.weights.cols);
        g.biases.emplace_back(layer.bias.size(), 0.0);
    }
    return g;
}

void Gradients::add_scaled(const Gradients& other, double scale) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (std::size_t i = 0; i < weights[l].data.size(); ++i) {
            weights[l].data[i] += scale * other.weights[l].data[i];
        }
        for (std::size_t i = 0; i < biases[l].size(); ++i) {
            biases[l][i] += scale * other.biases[l][i];
        }
    }
}

bool Gradients::all_zero() const {
    for (const auto& w : weights) {
        for (double v : w.data) {
            if (v != 0.0) return false;
        }
    }
    for (const auto& b : biases) {
        for (double v : b) {
            if (v != 0.0) return false;
        }
    }
    return true;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::invalid_argument, msg); };
    if (!(margin > 0.0)) fail("margin must be > 0");
    if (!(learning_rate > 0.0)) fail("learning rate must be > 0");
    if (batch_size == 0) fail("batch size must be positive");
    if (!(p_norm >= 1.0) || !std::isfinite(p_norm)) fail("p-norm must be >= 1");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) fail("adam beta1 must be in (0,1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) fail("adam beta2 must be in (0,1)");
    if (!(adam_epsilon > 0.0)) fail("adam epsilon must be > 0");
}

double triplet_loss(std::span<const double> a, std::span<const double> p,
                    std::span<const double> n, double margin, double p_norm) {
    require_same_dim(a.size(), p.size(), "triplet_loss");
    require_same_dim(a.size(), n.size(), "triplet_loss");
    const double arg = pnorm_distance(a, p, p_norm) - pnorm_distance(a, n, p_norm) + margin;
    return arg > 0.0 ? arg : 0.0;
}

TripletEvaluation evaluate_triplet(const EmbedderModel& model, const Triplet& triplet,
                                   const TrainConfig& cfg) {
    if (triplet.anchor_label != triplet.positive_label ||
        triplet.anchor_label == triplet.negative_label) {
        throw Error(ErrorCode::invalid_data,
                    "triplet label constraint violated (anchor '" +
                        std::string(triplet.anchor_label) + "', positive '" +
                        std::string(triplet.positive_label) + "', negative '" +
                        std::string(triplet.negative_label) + "')");
    }
    const ForwardCache ca = forward_cached(model, triplet.anchor);
    const ForwardCache cp = forward_cached(model, triplet.positive);
    const ForwardCache cn = forward_cached(model, triplet.negative);

    const double d_ap = pnorm_distance(ca.output, cp.output, cfg.p_norm);
    const double d_an = pnorm_distance(ca.output, cn.output, cfg.p_norm);
    const double arg = d_ap - d_an + cfg.margin;

    TripletEvaluation out;
    out.gradients = Gradients::zeros_like(model);
    if (!(arg > 0.0)) return out;  // flat branch, including the kink itself
    out.loss = arg;

    const Vector g_ap = distance_gradient(ca.output, cp.output, d_ap, cfg.p_norm);
    const Vector g_an = distance_gradient(ca.output, cn.output, d_an, cfg.p_norm);
    Vector d_anchor(g_ap.size()), d_pos(g_ap.size()), d_neg(g_ap.size());
    for (std::size_t i = 0; i < g_ap.size(); ++i) {
        d_anchor[i] = g_ap[i] - g_an[i];
        d_pos[i] = -g_ap[i];
        d_neg[i] = g_an[i];
    }
    backward(model, ca, std::move(d_anchor), out.gradients);
    backward(model, cp, std::move(d_pos), out.gradients);
    backward(model, cn, std::move(d_neg), out.gradients);
    return out;
}

Gradients triplet_loss_gradient(const EmbedderModel& model, const Triplet& triplet,
                                const TrainConfig& cfg) {
    return evaluate_triplet(model, triplet, cfg).gradients;
}

namespace {

// Returns an empty list when the batch offers no valid triplet.
std::vector<TripletIndex> mine_batch(std::span<const Record> data,
                                     std::span<const std::size_t> batch,
                                     const EmbedderModel& model, const TrainConfig& cfg,
                                     Rng& rng) {
    std::vector<TripletIndex> out;
    if (cfg.mining == Mining::random) {
        std::vector<std::size_t> positives, negatives;
        for (std::size_t i : batch) {
            positives.clear();
            negatives.clear();
            for (std::size_t j : batch) {
                if (j == i) continue;
                (data[j].label == data[i].label ? positives : negatives).push_back(j);
            }
            if (positives.empty() || negatives.empty()) continue;
            const std::size_t p = positives[rng.index(positives.size())];
            const std::size_t n = negatives[rng.index(negatives.size())];
            out.push_back({i, p, n});
        }
        return out;
    }

    std::vector<Vector> embedded;
    embedded.reserve(batch.size());
    for (std::size_t i : batch) embedded.push_back(forward(model, data[i].values));
    for (std::size_t a = 0; a < batch.size(); ++a) {
        const std::size_t i = batch[a];
        std::size_t best_p = 0, best_n = 0;
        double far_p = -1.0;
        double near_n = 0.0;
        bool has_p = false, has_n = false;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const std::size_t j = batch[b];
            if (j == i) continue;
            const double d = pnorm_distance(embedded[a], embedded[b], cfg.p_norm);
            if (data[j].label == data[i].label) {
                if (!has_p || d > far_p) {
                    far_p = d;
                    best_p = j;
                    has_p = true;
                }
            } else if (!has_n || d < near_n) {
                near_n = d;
                best_n = j;
                has_n = true;
            }
        }
        if (has_p && has_n) out.push_back({i, best_p, best_n});
    }
    return out;
}

void require_minable(std::span<const Record> data, std::span<const std::size_t> batch) {
    std::map<std::string_view, std::size_t> counts;
    for (std::size_t i : batch) ++counts[data[i].label];
    if (counts.size() < 2) {
        throw Error(ErrorCode::invalid_data,
                    "triplet mining needs at least two classes (no negatives exist)");
    }
    const bool has_pair = std::any_of(counts.begin(), counts.end(),
                                      [](const auto& kv) { return kv.second >= 2; });
    if (!has_pair) {
        throw Error(ErrorCode::invalid_data,
                    "triplet mining needs a class with at least two samples");
    }
}

Triplet make_triplet(std::span<const Record> data, const TripletIndex& t) {
    return Triplet{data[t.anchor].values, data[t.positive].values, data[t.negative].values,
                   data[t.anchor].label,  data[t.positive].label,  data[t.negative].label};
}

} // namespace

std::vector<TripletIndex> mine_triplets(std::span<const Record> data,
                                        std::span<const std::size_t> batch,
                                        const EmbedderModel& model, const TrainConfig& cfg,
                                        Rng& rng) {
    for (std::size_t i : batch) {
        if (i >= data.size()) {
            throw Error(ErrorCode::invalid_argument, "batch index out of range");
        }
    }
    require_minable(data, batch);
    return mine_batch(data, batch, model, cfg, rng);
}

std::vector<TripletIndex> mine_triplets(std::span<const Record> data,
                                        const EmbedderModel& model, const TrainConfig& cfg) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng rng(cfg.seed);
    return mine_triplets(data, all, model, cfg, rng);
}

AdamState::AdamState(const EmbedderModel& model)
    : m_(Gradients::zeros_like(model)), v_(Gradients::zeros_like(model)) {}

void AdamState::step(EmbedderModel& model, const Gradients& grads, const TrainConfig& cfg) {
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
    auto update = [&](std::vector<double>& param, const std::vector<double>& g,
                      std::vector<double>& m, std::vector<double>& v) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            param[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
        }
    };
    auto& layers = model.mutable_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights.data, grads.weights[l].data, m_.weights[l].data,
               v_.weights[l].data);
        update(layers[l].bias, grads.biases[l], m_.biases[l], v_.biases[l]);
    }
}

TrainResult train(EmbedderModel model, std::span<const Record> dataset, const TrainConfig& cfg) {
    cfg.validate();
    TrainResult result;
    if (cfg.epochs == 0) {
        result.model = std::move(model);
        return result;
    }
    for (const auto& r : dataset) {
        require_same_dim(r.values.size(), model.input_dim(), "training sample");
    }
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    require_minable(dataset, order);

    Rng rng(cfg.seed);
    AdamState adam(model);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t triplet_count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            const auto triplets = mine_batch(dataset, batch, model, cfg, rng);
            if (triplets.empty()) continue;

            Gradients grads = Gradients::zeros_like(model);
            const double scale = 1.0 / static_cast<double>(triplets.size());
            for (const auto& t : triplets) {
                const auto eval = evaluate_triplet(model, make_triplet(dataset, t), cfg);
                loss_sum += eval.loss;
                grads.add_scaled(eval.gradients, scale);
            }
            triplet_count += triplets.size();
            adam.step(model, grads, cfg);
        }
        result.loss_trace.push_back(
            triplet_count ? loss_sum / static_cast<double>(triplet_count) : 0.0);
    }
    result.model = std::move(model);
    return result;
}

std::vector<Record> embed_records(const EmbedderModel& model, std::span<const Record> records) {
    std::vector<Record> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        Record e = r;
        e.values = forward(model, r.values);
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace openset
