#pragma once

#include "mcl/data.hpp"
#include "mcl/error.hpp"
#include "mcl/mask.hpp"
#include "mcl/model.hpp"
#include "mcl/nn.hpp"
#include "mcl/optim.hpp"
#include "mcl/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace mcl {

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double lr_decay = 0.1;
    std::vector<std::size_t> decay_epochs = {15, 54};  // 0-based epochs where lr is multiplied by lr_decay
    double weight_decay = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    bool augment = true;
    std::size_t threads = 0;  // 0: hardware concurrency

    std::ostream* log = nullptr;
    const LabeledDataset* validation = nullptr;

    [[nodiscard]] double lr_at(std::size_t epoch) const {
        double lr_e = lr;
        for (auto d : decay_epochs)
            if (epoch >= d) lr_e *= lr_decay;
        return lr_e;
    }

    void validate() const {
        if (batch_size == 0) throw Error(ErrorKind::argument, "batch size must be positive");
        if (!std::is_sorted(decay_epochs.begin(), decay_epochs.end()))
            throw Error(ErrorKind::argument, "lr decay epochs must be sorted ascending");
    }

    /// Default schedule stretched to `n` epochs: decays at n/4 and 9n/10
    /// (15 and 54 for 60 epochs).
    static TrainConfig scaled(std::size_t n) {
        TrainConfig c;
        c.epochs = n;
        c.decay_epochs = {n / 4, n * 9 / 10};
        return c;
    }

    /// Task-network pretraining: lr 3e-3 for `n` epochs, x0.1 for the last fifth.
    static TrainConfig pretrain_defaults(std::size_t n = 30) {
        TrainConfig c;
        c.epochs = n;
        c.lr = 3e-3;
        c.decay_epochs = {n * 4 / 5};
        return c;
    }

    /// Constant lr = 1e-4 for 30 epochs, used for per-rate server finetuning.
    static TrainConfig finetune_defaults() {
        TrainConfig c;
        c.epochs = 30;
        c.lr = 1e-4;
        c.decay_epochs.clear();
        return c;
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = 0.0;
    double lr = 0.0;
    std::vector<double> mask_mean;
    Shape mask_min;
    Shape mask_max;
};

inline std::string format_record(const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch=%zu split=%s loss=%.9g accuracy=%.9g lr=%.9g", r.epoch, r.split.c_str(),
                  r.loss, r.accuracy, r.lr);
    std::string line = buf;
    if (!r.mask_mean.empty()) {
        line += " mask_mean=";
        for (std::size_t k = 0; k < r.mask_mean.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%s%.4f", k ? "x" : "", r.mask_mean[k]);
            line += buf;
        }
        line += " mask_min=" + shape_string(r.mask_min) + " mask_max=" + shape_string(r.mask_max);
    }
    return line;
}

using TrainHistory = std::vector<EpochRecord>;

namespace detail {

enum : std::uint64_t { kShuffleStream = 1, kAugmentStream = 2, kMaskStream = 3 };

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index writes only
/// its own output slot, so results do not depend on the thread count.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) fn(i);
        });
}

struct SampleOutcome {
    double loss = 0.0;
    bool correct = false;
    MaskDims dims;
};

/// Shared minibatch loop. `sample_fn(y, label, mask_rng, weight, grads)` returns
/// the sample loss and accumulates weight * dloss into `grads`. Per-sample
/// gradients are summed in sample order so results are bitwise reproducible.
template <typename SampleFn, typename ValidateFn>
TrainHistory run_epochs(std::vector<ParamSlot> slots, const LabeledDataset& data, const TrainConfig& cfg,
                        SampleFn&& sample_fn, ValidateFn&& validate_fn) {
    cfg.validate();
    if (data.empty()) throw Error(ErrorKind::empty_dataset, "training set is empty");
    AdamState adam;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.eps = cfg.eps;
    adam.weight_decay = cfg.weight_decay;

    const Rng root(cfg.seed);
    const std::size_t n = data.size();
    std::vector<Gradients> per_sample(std::min(cfg.batch_size, n), zero_gradients(slots));
    std::vector<SampleOutcome> outcomes(per_sample.size());
    Gradients total = zero_gradients(slots);
    TrainHistory history;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        adam.lr = cfg.lr_at(epoch);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle = root.split(kShuffleStream).split(epoch);
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::vector<double> dims_sum;
        Shape dims_min, dims_max;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t batch = std::min(cfg.batch_size, n - start);
            const double weight = 1.0 / static_cast<double>(batch);
            parallel_for(batch, cfg.threads, [&](std::size_t b) {
                const std::size_t idx = order[start + b];
                for (auto& g : per_sample[b]) std::fill(g.begin(), g.end(), 0.0);
                Tensor y = data.samples[idx];
                if (cfg.augment) {
                    Rng aug = root.split(kAugmentStream).split(epoch).split(idx);
                    y = apply_augmentation(y, draw_augmentation(y.shape(), aug));
                }
                Rng mask_rng = root.split(kMaskStream).split(epoch).split(idx);
                outcomes[b] = sample_fn(y, data.labels[idx], mask_rng, weight, per_sample[b]);
            });
            for (std::size_t p = 0; p < total.size(); ++p) {
                auto& dst = total[p];
                std::fill(dst.begin(), dst.end(), 0.0);
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto& src = per_sample[b][p];
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
                }
            }
            for (std::size_t b = 0; b < batch; ++b) {
                loss_sum += outcomes[b].loss;
                correct += outcomes[b].correct ? 1 : 0;
                const auto& d = outcomes[b].dims;
                if (d.empty()) continue;
                if (dims_sum.empty()) {
                    dims_sum.assign(d.size(), 0.0);
                    dims_min = d;
                    dims_max = d;
                }
                for (std::size_t k = 0; k < d.size(); ++k) {
                    dims_sum[k] += static_cast<double>(d[k]);
                    dims_min[k] = std::min(dims_min[k], d[k]);
                    dims_max[k] = std::max(dims_max[k], d[k]);
                }
            }
            adam_step(slots, total, adam);
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.split = "train";
        rec.loss = loss_sum / static_cast<double>(n);
        rec.accuracy = static_cast<double>(correct) / static_cast<double>(n);
        rec.lr = adam.lr;
        for (double s : dims_sum) rec.mask_mean.push_back(s / static_cast<double>(n));
        rec.mask_min = dims_min;
        rec.mask_max = dims_max;
        if (cfg.log) *cfg.log << format_record(rec) << '\n';
        history.push_back(rec);
        if (cfg.validation) {
            EpochRecord val;
            val.epoch = epoch + 1;
            val.split = "val";
            val.lr = adam.lr;
            val.accuracy = validate_fn(*cfg.validation);
            if (cfg.log) *cfg.log << format_record(val) << '\n';
            history.push_back(val);
        }
    }
    return history;
}

}  // namespace detail

/// Fraction of correct predictions through the deployment path (prefix of size
/// `dims`, 32-bit wire rounding, zero padding, synthesis, network).
inline double evaluate(const MclModel& model, const Shape& dims, const LabeledDataset& data) {
    model.check_dims(dims);
    if (data.empty()) throw Error(ErrorKind::empty_dataset, "evaluation set is empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (argmax(predict_deployed(model, data.samples[i], dims)) == data.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

inline double evaluate_network(const TaskNetwork& net, const LabeledDataset& data) {
    if (data.empty()) throw Error(ErrorKind::empty_dataset, "evaluation set is empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (argmax(net.forward(data.samples[i])) == data.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Trains the task network alone on uncompressed signals.
inline TrainHistory pretrain_task_network(TaskNetwork& net, const LabeledDataset& data, const TrainConfig& cfg) {
    if (data.empty()) throw Error(ErrorKind::empty_dataset, "pretraining set is empty");
    auto sample_fn = [&](const Tensor& y, std::size_t label, Rng&, double weight, Gradients& g) {
        TaskNetwork::Cache cache;
        const Tensor scores = net.forward(y, &cache);
        auto loss = softmax_cross_entropy(scores, label, weight);
        net.backward(cache, loss.d_scores, g, 0, false);
        return detail::SampleOutcome{loss.loss, loss.predicted == label, {}};
    };
    return detail::run_epochs(net.slots(), data, cfg, sample_fn,
                              [&](const LabeledDataset& v) { return evaluate_network(net, v); });
}

namespace detail {

inline void check_model_data(const MclModel& model, const LabeledDataset& data) {
    model.validate();
    if (data.empty()) throw Error(ErrorKind::empty_dataset, "training set is empty");
    if (data.input_shape() != model.input_shape())
        throw Error(ErrorKind::shape, "dataset shape " + shape_string(data.input_shape()) + " does not match model " +
                                          shape_string(model.input_shape()));
    if (data.class_count != model.classes())
        throw Error(ErrorKind::shape, "dataset has " + std::to_string(data.class_count) + " classes, model has " +
                                          std::to_string(model.classes()));
}

}  // namespace detail

/// Joint end-to-end training of sensing, synthesis and network at the model's
/// full measurement shape.
inline TrainHistory train_single_rate(MclModel& model, const LabeledDataset& data, const TrainConfig& cfg,
                                      TrainingMode mode = TrainingMode::single_rate) {
    detail::check_model_data(model, data);
    model.mask_spec.reset();
    model.seed = cfg.seed;
    auto sample_fn = [&](const Tensor& y, std::size_t label, Rng&, double weight, Gradients& g) {
        ForwardCache cache;
        const Tensor scores = forward(model, y, std::nullopt, &cache);
        auto loss = softmax_cross_entropy(scores, label, weight);
        backward(model, cache, loss.d_scores, g);
        return detail::SampleOutcome{loss.loss, loss.predicted == label, {}};
    };
    const Shape full = model.measurement_shape();
    auto history = detail::run_epochs(model.slots(), data, cfg, sample_fn,
                                      [&](const LabeledDataset& v) { return evaluate(model, full, v); });
    model.mode = mode;
    return history;
}

/// Joint training under a fresh random prefix mask per sample and forward pass.
inline TrainHistory train_adaptive(MclModel& model, const LabeledDataset& data, const TrainConfig& cfg,
                                   const MaskSpec& spec) {
    spec.validate();
    if (spec.max_dims != model.measurement_shape())
        throw Error(ErrorKind::dims, "mask spec max dims " + shape_string(spec.max_dims) +
                                         " must equal the measurement shape " + shape_string(model.measurement_shape()));
    model.mask_spec = spec;
    detail::check_model_data(model, data);
    model.seed = cfg.seed;
    auto sample_fn = [&](const Tensor& y, std::size_t label, Rng& mask_rng, double weight, Gradients& g) {
        const MaskDims dims = sample_mask_dims(spec, mask_rng);
        ForwardCache cache;
        const Tensor scores = forward(model, y, dims, &cache, MaskStep::hadamard);
        auto loss = softmax_cross_entropy(scores, label, weight);
        backward(model, cache, loss.d_scores, g);
        return detail::SampleOutcome{loss.loss, loss.predicted == label, dims};
    };
    auto history = detail::run_epochs(model.slots(), data, cfg, sample_fn,
                                      [&](const LabeledDataset& v) { return evaluate(model, spec.max_dims, v); });
    model.mode = TrainingMode::adaptive;
    return history;
}

/// Server-side pair specialised to one measurement size.
struct RatePair {
    MaskDims dims;
    SynthesisOperatorSet synthesis;
    TaskNetwork network;
};

/// Finetunes synthesis and network for fixed `dims` through the deployment
/// path with the sensing operators frozen.
inline RatePair finetune_server_side(const MclModel& model, const MaskDims& dims, const LabeledDataset& data,
                                     const TrainConfig& cfg, TrainHistory* history = nullptr) {
    model.check_dims(dims);
    detail::check_model_data(model, data);
    MclModel work = model;
    auto sample_fn = [&](const Tensor& y, std::size_t label, Rng&, double weight, Gradients& g) {
        ForwardCache cache;
        const Tensor scores = forward(work, y, dims, &cache, MaskStep::prefix_pad);
        auto loss = softmax_cross_entropy(scores, label, weight);
        backward(work, cache, loss.d_scores, g, /*train_sensing=*/false);
        return detail::SampleOutcome{loss.loss, loss.predicted == label, dims};
    };
    auto h = detail::run_epochs(work.slots(false, true, true), data, cfg, sample_fn,
                                [&](const LabeledDataset& v) { return evaluate(work, dims, v); });
    if (history) *history = std::move(h);
    return {dims, std::move(work.synthesis), std::move(work.network)};
}

/// Accuracy of a finetuned pair with the shared sensing operators.
inline double evaluate_rate_pair(const SensingOperatorSet& sensing, const RatePair& pair, const LabeledDataset& data) {
    if (data.empty()) throw Error(ErrorKind::empty_dataset, "evaluation set is empty");
    const Shape full = sensing.measurement_shape();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Tensor z_bar = to_wire_precision(acquire_prefix(sensing, data.samples[i], pair.dims));
        if (argmax(predict_from_measurement(pair.synthesis, pair.network, z_bar, full)) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// HOSVD-initialised operators around a (typically pretrained) network.
inline MclModel make_model(const LabeledDataset& data, const Shape& measurement_shape, TaskNetwork network,
                           double* core_energy = nullptr) {
    const auto init = hosvd_init(data.samples, measurement_shape);
    if (core_energy) *core_energy = init.core_energy;
    MclModel model;
    model.sensing = init.sensing;
    model.synthesis = init.synthesis;
    model.network = std::move(network);
    model.validate();
    return model;
}

}  // namespace mcl
