// Small end-to-end run: synthetic data, HOSVD init, a few epochs of
// adaptive-rate training, evaluation at several sizes and a simulated session.
#include "mcl/mcl.hpp"

#include <iostream>

int main() {
    using namespace mcl;
    const auto all = make_synthetic(4, 60, {16, 16, 3}, 7);
    const double fractions[] = {0.8, 0.2};
    const auto parts = split(all, fractions, 7);

    TaskNetwork net({16, 16, 3}, desk_network_layers(3, 4));
    Rng rng(1);
    net.initialize(rng);
    TrainConfig pre = TrainConfig::pretrain_defaults(5);
    pretrain_task_network(net, parts.train, pre);

    double energy = 0.0;
    MclModel model = make_model(parts.train, {8, 8, 2}, net, &energy);
    std::cout << "core energy " << energy << '\n';

    const MaskSpec spec{{3, 3, 1}, {8, 8, 2}};
    TrainConfig cfg = TrainConfig::scaled(8);
    cfg.log = &std::cout;
    train_adaptive(model, parts.train, cfg, spec);

    for (const Shape& dims : {Shape{3, 3, 1}, Shape{4, 6, 1}, Shape{8, 8, 2}})
        std::cout << shape_string(dims) << " accuracy " << evaluate(model, dims, parts.val) << '\n';

    // 40 samples/s with a 1000 B/s link for 0.5 s, then 150 B/s.
    const ChannelTrace trace{{{0.0, 1000.0}, {0.5, 150.0}}};
    SessionOptions opts;
    opts.deadline_s = 0.025;
    const auto report = run_session(model, parts.val, trace, opts);
    std::cout << "session accuracy " << report.accuracy() << ", correct/s " << report.correct_per_second() << '\n';
}
