#pragma once

// Command-line front end. Kept in a header so the test suite can drive every
// subcommand in-process through run_cli().

#include "mcl/mcl.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace mcl::cli {

enum ExitCode : int { ok = 0, usage = 1, data = 2, numeric = 3 };

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::numeric: return numeric;
        case ErrorKind::mode_index:
        case ErrorKind::dims:
        case ErrorKind::argument: return usage;
        default: return data;
    }
}

struct DataOptions {
    std::string data_dir;
    bool synthetic = false;
    std::size_t classes = 4;
    std::string input_shape = "16x16x3";
    std::size_t per_class = 250;
    std::uint64_t data_seed = 7;

    void attach(CLI::App& app) {
        app.add_option("--data-dir", data_dir, "Directory with CIFAR-10 binary batches");
        app.add_flag("--synthetic", synthetic, "Use the built-in synthetic dataset");
        app.add_option("--classes", classes, "Number of classes")->capture_default_str();
        app.add_option("--input-shape", input_shape, "Synthetic sample shape HxWxC")->capture_default_str();
        app.add_option("--per-class", per_class, "Synthetic samples per class")->capture_default_str();
        app.add_option("--data-seed", data_seed, "Seed for synthetic data and its split")->capture_default_str();
    }
};

struct Data {
    LabeledDataset train;
    LabeledDataset test;
};

/// Synthetic data is split 80/20 per class; CIFAR uses data_batch_*.bin for
/// training and test_batch.bin for testing.
inline Data load_data(const DataOptions& o) {
    if (o.synthetic == !o.data_dir.empty())
        throw Error(ErrorKind::argument, "give exactly one of --synthetic or --data-dir");
    Data d;
    if (o.synthetic) {
        const auto all = make_synthetic(o.classes, o.per_class, parse_shape(o.input_shape), o.data_seed);
        const double fractions[] = {0.8, 0.2};
        auto parts = split(all, fractions, o.data_seed);
        d.train = std::move(parts.train);
        d.test = std::move(parts.val);
        d.test.split = SplitTag::test;
        return d;
    }
    const std::filesystem::path dir = o.data_dir;
    d.train.class_count = o.classes;
    for (int b = 1; b <= 5; ++b) {
        const auto p = dir / ("data_batch_" + std::to_string(b) + ".bin");
        if (!std::filesystem::exists(p)) continue;
        auto part = load_cifar_binary(p, SplitTag::train, o.classes);
        for (std::size_t i = 0; i < part.size(); ++i) d.train.push_back(std::move(part.samples[i]), part.labels[i]);
    }
    d.train.split = SplitTag::train;
    if (d.train.empty()) throw Error(ErrorKind::empty_dataset, "no data_batch_*.bin files in " + dir.string());
    d.test = load_cifar_binary(dir / "test_batch.bin", SplitTag::test, o.classes);
    return d;
}

inline std::vector<Shape> parse_dims_list(const std::vector<std::string>& texts) {
    std::vector<Shape> out;
    for (const auto& t : texts) out.push_back(parse_shape(t));
    return out;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline void write_history(const std::filesystem::path& path, const TrainHistory& h) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error(ErrorKind::format, "cannot write " + path.string());
    for (const auto& r : h) os << format_record(r) << '\n';
}

inline std::filesystem::path metrics_path(const std::string& out) { return out + ".metrics.log"; }

/// Loaded container of either kind.
struct AnyModel {
    std::optional<MclModel> model;
    std::optional<RateTable> table;
};

inline AnyModel load_any(const std::string& path) {
    const Container c = decode_container(read_file(path));
    AnyModel a;
    if (c.meta("kind") == "rate_table")
        a.table = table_from_container(c);
    else
        a.model = model_from_container(c);
    return a;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive-rate multilinear compressive learning"};
    app.require_subcommand(1);

    DataOptions data_opts;
    std::string model_path, out_path, mode = "adaptive", mask_min, mask_max, measurement_shape, trace_path;
    std::string fixed_dims;
    std::vector<std::string> dims_texts;
    std::size_t epochs = 0, batch = 32, width = 8, threads = 0;
    double lr = 0.0, deadline = 0.0;
    std::uint64_t seed = 1;
    bool tcp = false, reference = false;

    auto* init = app.add_subcommand("init", "HOSVD-initialise operators around a pretrained task network");
    data_opts.attach(*init);
    init->add_option("--measurement-shape", measurement_shape, "Measurement shape MxMxM")->required();
    init->add_option("--epochs", epochs, "Task-network pretraining epochs (default 30)");
    init->add_option("--width", width, "Task-network width")->capture_default_str();
    init->add_option("--seed", seed, "Seed")->capture_default_str();
    init->add_option("--threads", threads, "Worker threads (0: all cores)");
    init->add_option("--out", out_path, "Output model container")->required();

    auto* train = app.add_subcommand("train", "Train a model end to end");
    data_opts.attach(*train);
    train->add_option("--model", model_path, "Input model container")->required();
    train->add_option("--mode", mode, "single | adaptive | baseline")->capture_default_str();
    train->add_option("--mask-min", mask_min, "Smallest measurement prefix (adaptive)");
    train->add_option("--mask-max", mask_max, "Largest measurement prefix (adaptive, defaults to measurement shape)");
    train->add_option("--epochs", epochs, "Epochs (default 60)");
    train->add_option("--batch", batch, "Minibatch size")->capture_default_str();
    train->add_option("--lr", lr, "Initial learning rate (default 1e-3)");
    train->add_option("--seed", seed, "Seed")->capture_default_str();
    train->add_option("--threads", threads, "Worker threads (0: all cores)");
    train->add_option("--out", out_path, "Output model container")->required();

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Accuracy at one or more measurement sizes");
    data_opts.attach(*evaluate_cmd);
    evaluate_cmd->add_option("--model", model_path, "Model or rate-table container")->required();
    evaluate_cmd->add_option("--dims", dims_texts, "Measurement prefix dims (repeatable)");

    auto* finetune = app.add_subcommand("finetune", "Per-rate server-side finetuning with frozen sensing");
    data_opts.attach(*finetune);
    finetune->add_option("--model", model_path, "Trained model container")->required();
    finetune->add_option("--dims", dims_texts, "Measurement prefix dims (repeatable)")->required();
    finetune->add_option("--epochs", epochs, "Epochs (default 30)");
    finetune->add_option("--batch", batch, "Minibatch size")->capture_default_str();
    finetune->add_option("--lr", lr, "Learning rate (default 1e-4)");
    finetune->add_option("--seed", seed, "Seed")->capture_default_str();
    finetune->add_option("--threads", threads, "Worker threads (0: all cores)");
    finetune->add_option("--out", out_path, "Output rate-table container")->required();

    auto* simulate = app.add_subcommand("simulate", "Client/server session under a bandwidth trace");
    data_opts.attach(*simulate);
    simulate->add_option("--model", model_path, "Model or rate-table container")->required();
    simulate->add_option("--trace", trace_path, "Bandwidth trace file")->required();
    simulate->add_option("--deadline", deadline, "Seconds per sample")->required();
    simulate->add_option("--fixed-dims", fixed_dims, "Always send this prefix instead of using the controller");
    simulate->add_flag("--tcp", tcp, "Use a loopback TCP connection instead of the in-process channel");
    simulate->add_option("--out", out_path, "Report file (default: stdout)");

    auto* flops = app.add_subcommand("flops", "Operation counts per inference");
    flops->add_option("--model", model_path, "Model container");
    flops->add_flag("--reference", reference, "(32,32,3) -> (15,15,2) with the AllCNN-C task network");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage;
    }

    try {
        if (*init) {
            const Data d = load_data(data_opts);
            const Shape input = d.train.input_shape();
            TaskNetwork net(input, desk_network_layers(input.back(), d.train.class_count, width));
            Rng rng = Rng(seed).split(0x1417);
            net.initialize(rng);
            TrainConfig cfg = TrainConfig::pretrain_defaults(init->count("--epochs") ? epochs : 30);
            cfg.seed = seed;
            cfg.threads = threads;
            cfg.validation = &d.test;
            const auto history = pretrain_task_network(net, d.train, cfg);
            double energy = 0.0;
            MclModel model = make_model(d.train, parse_shape(measurement_shape), std::move(net), &energy);
            model.seed = seed;
            save_model(out_path, model);
            write_history(metrics_path(out_path), history);
            out << "core_energy=" << fmt(energy) << '\n';
            out << "pretrain_test_accuracy=" << fmt(evaluate_network(model.network, d.test)) << '\n';
            return ok;
        }
        if (*train) {
            MclModel model = load_model(model_path);
            const Data d = load_data(data_opts);
            const auto tmode = parse_training_mode(mode);
            if (tmode == TrainingMode::initialized) throw Error(ErrorKind::argument, "mode must be single, adaptive or baseline");
            const bool mask_flags = !mask_min.empty() || !mask_max.empty();
            if (tmode != TrainingMode::adaptive && mask_flags)
                throw Error(ErrorKind::argument, "--mask-min/--mask-max only apply to --mode adaptive");
            if (tmode == TrainingMode::adaptive && mask_min.empty() && !model.mask_spec)
                throw Error(ErrorKind::argument, "--mode adaptive needs --mask-min");
            TrainConfig cfg = TrainConfig::scaled(train->count("--epochs") ? epochs : 60);
            cfg.batch_size = batch;
            if (lr > 0.0) cfg.lr = lr;
            cfg.seed = seed;
            cfg.threads = threads;
            cfg.validation = &d.test;
            TrainHistory history;
            if (tmode == TrainingMode::adaptive) {
                MaskSpec spec = model.mask_spec.value_or(MaskSpec{});
                if (!mask_min.empty()) spec.min_dims = parse_shape(mask_min);
                spec.max_dims = mask_max.empty() ? model.measurement_shape() : parse_shape(mask_max);
                history = train_adaptive(model, d.train, cfg, spec);
            } else {
                history = train_single_rate(model, d.train, cfg, tmode);
            }
            save_model(out_path, model);
            write_history(metrics_path(out_path), history);
            out << "mode=" << to_string(model.mode) << " epochs=" << cfg.epochs << '\n';
            return ok;
        }
        if (*evaluate_cmd) {
            const AnyModel a = load_any(model_path);
            const Data d = load_data(data_opts);
            auto dims = parse_dims_list(dims_texts);
            if (a.model) {
                if (dims.empty()) dims.push_back(a.model->measurement_shape());
                for (const auto& dm : dims) a.model->check_dims(dm);
                for (const auto& dm : dims)
                    out << "dims=" << shape_string(dm) << " accuracy=" << fmt(evaluate(*a.model, dm, d.test))
                        << " samples=" << d.test.size() << '\n';
            } else {
                if (dims.empty()) dims = a.table->dims_list();
                for (const auto& dm : dims)
                    if (!a.table->find(dm)) throw Error(ErrorKind::dims, "no finetuned pair for dims " + shape_string(dm));
                for (const auto& dm : dims)
                    out << "dims=" << shape_string(dm)
                        << " accuracy=" << fmt(evaluate_rate_pair(a.table->sensing, *a.table->find(dm), d.test))
                        << " samples=" << d.test.size() << '\n';
            }
            return ok;
        }
        if (*finetune) {
            const MclModel model = load_model(model_path);
            if (model.mode == TrainingMode::initialized)
                throw Error(ErrorKind::argument, "finetuning needs a trained model; run train first");
            const Data d = load_data(data_opts);
            const auto dims = parse_dims_list(dims_texts);
            for (const auto& dm : dims) model.check_dims(dm);
            TrainConfig cfg = TrainConfig::finetune_defaults();
            if (finetune->count("--epochs")) cfg.epochs = epochs;
            if (lr > 0.0) cfg.lr = lr;
            cfg.batch_size = batch;
            cfg.seed = seed;
            cfg.threads = threads;
            RateTable table;
            table.sensing = model.sensing;
            if (model.mask_spec) {
                table.spec = *model.mask_spec;
            } else {
                table.spec = {dims.front(), model.measurement_shape()};
                for (const auto& dm : dims)
                    for (std::size_t k = 0; k < dm.size(); ++k)
                        table.spec.min_dims[k] = std::min(table.spec.min_dims[k], dm[k]);
            }
            std::ofstream log(metrics_path(out_path), std::ios::trunc);
            for (const auto& dm : dims) {
                if (table.find(dm)) continue;
                TrainHistory h;
                table.pairs.push_back(finetune_server_side(model, dm, d.train, cfg, &h));
                for (const auto& r : h) log << "dims=" << shape_string(dm) << ' ' << format_record(r) << '\n';
                out << "dims=" << shape_string(dm)
                    << " accuracy=" << fmt(evaluate_rate_pair(table.sensing, table.pairs.back(), d.test)) << '\n';
            }
            save_table(out_path, table);
            return ok;
        }
        if (*simulate) {
            const AnyModel a = load_any(model_path);
            const Data d = load_data(data_opts);
            const ChannelTrace trace = load_trace(trace_path);
            SessionOptions opts;
            opts.deadline_s = deadline;
            if (!fixed_dims.empty()) opts.fixed_dims = parse_shape(fixed_dims);
            opts.transport = tcp ? Transport::tcp_loopback : Transport::in_process;
            const SessionReport report =
                a.model ? run_session(*a.model, d.test, trace, opts) : run_session(*a.table, d.test, trace, opts);
            if (out_path.empty()) {
                write_report(out, report);
            } else {
                std::ofstream os(out_path, std::ios::trunc);
                if (!os) throw Error(ErrorKind::format, "cannot write " + out_path);
                write_report(os, report);
                out << "accuracy=" << fmt(report.accuracy()) << " correct_per_s=" << fmt(report.correct_per_second())
                    << '\n';
            }
            return ok;
        }
        if (*flops) {
            if (reference == !model_path.empty()) throw Error(ErrorKind::argument, "give exactly one of --model or --reference");
            ModelConfig cfg;
            if (reference) {
                cfg = {{32, 32, 3}, {15, 15, 2}, allcnn_c_layers(10)};
            } else {
                const AnyModel a = load_any(model_path);
                const auto& sensing = a.model ? a.model->sensing : a.table->sensing;
                const auto& net = a.model ? a.model->network : a.table->pairs.front().network;
                cfg = {sensing.input_shape(), sensing.measurement_shape(), net.layers()};
            }
            const FlopReport r = count_flops(cfg);
            out << "mcs_flops=" << r.mcs_flops << '\n'
                << "fs_flops=" << r.fs_flops << '\n'
                << "tasknet_flops=" << r.tasknet_flops << '\n'
                << "vector_sense_flops=" << r.vector_sense_flops << '\n'
                << "ratio=" << fmt(r.ratio()) << '\n';
            return ok;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return data;
    }
    return usage;
}

}  // namespace mcl::cli
