#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "openset/numeric.hpp"
#include "openset/record.hpp"

namespace openset {

enum class Activation { relu, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct Layer {
    Matrix weights;  // out_dim x in_dim
    Vector bias;     // out_dim
    Activation activation = Activation::identity;

    bool operator==(const Layer&) const = default;
};

/// Feed-forward embedder. Construction validates that layer shapes chain and
/// that every parameter is finite.
class EmbedderModel {
public:
    EmbedderModel() = default;
    explicit EmbedderModel(std::vector<Layer> layers);

    /// Glorot-uniform weights, zero biases; relu on hidden layers, identity on the head.
    static EmbedderModel initialize(std::size_t input_dim, std::span<const std::size_t> hidden,
                                    std::size_t embed_dim, std::uint64_t seed);

    std::size_t input_dim() const;
    std::size_t embed_dim() const;
    std::size_t parameter_count() const;

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& mutable_layers() { return layers_; }

    bool operator==(const EmbedderModel&) const = default;

private:
    std::vector<Layer> layers_;
};

Vector forward(const EmbedderModel& model, std::span<const double> input);

/// Parameter-shaped buffer: used for gradients and for Adam moments.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static Gradients zeros_like(const EmbedderModel& model);
    void add_scaled(const Gradients& other, double scale);
    bool all_zero() const;
};

enum class Mining { random, batch_hard };

std::string_view to_string(Mining m);
Mining parse_mining(std::string_view name);

struct TrainConfig {
    double margin = 1.0;
    double learning_rate = 1e-4;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double p_norm = 2.0;
    Mining mining = Mining::random;
    std::uint64_t seed = 7;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
};

/// Views of an anchor/positive/negative feature triple and their labels.
struct Triplet {
    std::span<const double> anchor;
    std::span<const double> positive;
    std::span<const double> negative;
    std::string_view anchor_label;
    std::string_view positive_label;
    std::string_view negative_label;
};

/// Indices of a mined triplet into the dataset it was mined from.
struct TripletIndex {
    std::size_t anchor;
    std::size_t positive;
    std::size_t negative;

    bool operator==(const TripletIndex&) const = default;
};

/// max(d(a,p) - d(a,n) + margin, 0) on already-embedded vectors.
double triplet_loss(std::span<const double> a, std::span<const double> p,
                    std::span<const double> n, double margin, double p_norm = 2.0);

struct TripletEvaluation {
    double loss = 0.0;
    Gradients gradients;
};

/// Loss of a feature triplet through the model, with the gradient of that loss
/// with respect to every parameter. The gradient is exactly zero when the hinge
/// argument is <= 0.
TripletEvaluation evaluate_triplet(const EmbedderModel& model, const Triplet& triplet,
                                   const TrainConfig& cfg);

Gradients triplet_loss_gradient(const EmbedderModel& model, const Triplet& triplet,
                                const TrainConfig& cfg);

/// Mines triplets among `batch` (indices into `data`). Every sample whose class
/// has another member in the batch becomes an anchor once.
std::vector<TripletIndex> mine_triplets(std::span<const Record> data,
                                        std::span<const std::size_t> batch,
                                        const EmbedderModel& model, const TrainConfig& cfg,
                                        Rng& rng);

/// Mines over all of `data`, drawing randomness from cfg.seed.
std::vector<TripletIndex> mine_triplets(std::span<const Record> data,
                                        const EmbedderModel& model, const TrainConfig& cfg);

class AdamState {
public:
    explicit AdamState(const EmbedderModel& model);

    /// One bias-corrected Adam update of `model` along `grads`.
    void step(EmbedderModel& model, const Gradients& grads, const TrainConfig& cfg);

    std::uint64_t steps() const { return steps_; }
    const Gradients& first_moment() const { return m_; }
    const Gradients& second_moment() const { return v_; }

private:
    Gradients m_;
    Gradients v_;
    std::uint64_t steps_ = 0;
};

struct TrainResult {
    EmbedderModel model;
    std::vector<double> loss_trace;  // mean triplet loss per epoch
};

TrainResult train(EmbedderModel model, std::span<const Record> dataset, const TrainConfig& cfg);

std::vector<Record> embed_records(const EmbedderModel& model, std::span<const Record> records);

// Checkpoint persistence (versioned JSON).
std::string checkpoint_to_string(const EmbedderModel& model);
EmbedderModel checkpoint_from_string(const std::string& text);
void save_checkpoint(const EmbedderModel& model, const std::filesystem::path& path);
EmbedderModel load_checkpoint(const std::filesystem::path& path);

} // namespace openset
