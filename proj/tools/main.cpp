#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "wsciss/commands.hpp"
#include "wsciss/config.hpp"
#include "wsciss/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Weakly supervised class-incremental segmentation"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    app.add_option("-s,--set", overrides, "Override a config key, e.g. --set tasks.0.epochs=5");

    auto* gen = app.add_subcommand("gen-synthetic", "Render the synthetic shapes corpus");
    auto* split = app.add_subcommand("split", "Write per-task splits");
    auto* train = app.add_subcommand("train", "Train one task or the whole schedule");
    auto* eval = app.add_subcommand("eval", "Evaluate trained checkpoints");
    auto* ablate = app.add_subcommand("ablate", "Fusion x augmentation grid");
    std::optional<int> train_task, eval_task;
    train->add_option("-t,--task", train_task, "Task index (default: all tasks)");
    eval->add_option("-t,--task", eval_task, "Task index (default: every trained task)");
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    ablate->add_option("--seeds", seeds, "Seeds to average over");
    for (auto* sub : {gen, split, train, eval, ablate}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const wsciss::RunConfig cfg = wsciss::load_run_config(config_path, overrides);
        if (gen->parsed()) wsciss::cmd_gen_synthetic(cfg, std::cout);
        if (split->parsed()) wsciss::cmd_split(cfg, std::cout);
        if (train->parsed()) wsciss::cmd_train(cfg, train_task, std::cout);
        if (eval->parsed()) wsciss::cmd_eval(cfg, eval_task, std::cout);
        if (ablate->parsed()) wsciss::cmd_ablate(cfg, seeds, std::cout);
    } catch (const std::exception& e) {
        std::cerr << wsciss::error_record(e).dump() << '\n';
        return 1;
    }
    return 0;
}
