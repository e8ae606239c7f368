// Experiment runner: synthetic data generation, base-model training, merges,
// ensembles, evaluation, diagnostics, and report emission.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "revt/experiment.hpp"

namespace {

revt::ExperimentConfig load_config(const std::string& path, uint64_t seed, bool seed_set,
                                   const std::string& out_override) {
    revt::ExperimentConfig cfg = revt::ExperimentConfig::load(path);
    if (seed_set) cfg.master_seed = seed;
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"revt: desk-scale encoder re-parameterization laboratory"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_override;
    uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "experiment config file")->required();
    app.add_option("--out", out_override, "override the output directory");
    app.add_option("--seed", seed, "override the master seed")
        ->each([&seed_set](const std::string&) { seed_set = true; });

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic domains");

    auto* train = app.add_subcommand("train", "train base models");
    int model_index = 0;
    train->add_option("--model", model_index, "1-based base model index; 0 trains all");

    auto* merge = app.add_subcommand("merge", "average checkpoints into a merged model");
    revt::MergeOptions merge_opt;
    merge->add_option("--mode", merge_opt.mode,
                      "encoder_only | decoder_only | full | none");
    merge->add_option("--block", merge_opt.block,
                      "patch_embed | attention | mixffn | conv | fc");
    merge->add_option("--weights", merge_opt.weights, "uniform or w1,w2,w3");
    merge->add_option("--donor", merge_opt.donor, "1-based donor model for unmerged parts");

    auto* ens = app.add_subcommand("ensemble", "evaluate an ensemble of the base models");
    std::string ensemble_kind = "mean";
    ens->add_option("--ensemble", ensemble_kind, "mean | product | feature");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on every dev/test split");
    std::string checkpoint_rel;
    eval->add_option("--checkpoint", checkpoint_rel,
                     "checkpoint path relative to the output dir (default: all base models)");
    std::string subset_csv;
    eval->add_option("--subset", subset_csv, "comma-separated class subset for the mean");

    auto* cosine = app.add_subcommand("cosine", "parameter cosine-similarity diagnostics");
    auto* sweep = app.add_subcommand("sweep", "merge-weight sweep over the 3-model simplex");
    auto* report = app.add_subcommand("report", "summary tables over models and merges");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        revt::ExperimentConfig cfg = load_config(config_path, seed, seed_set, out_override);
        if (!subset_csv.empty()) {
            cfg.eval_subset.clear();
            for (const std::string& part : revt::detail::split_list(subset_csv))
                cfg.eval_subset.push_back(std::stoi(part));
        }

        if (gen->parsed()) {
            revt::cmd_gen_data(cfg);
        } else if (train->parsed()) {
            revt::cmd_train(cfg, model_index);
        } else if (merge->parsed()) {
            revt::cmd_merge(cfg, merge_opt);
        } else if (ens->parsed()) {
            revt::cmd_ensemble(cfg, ensemble_kind);
        } else if (eval->parsed()) {
            if (!checkpoint_rel.empty()) {
                revt::cmd_eval(cfg, checkpoint_rel);
            } else {
                for (size_t m = 0; m < cfg.models.size(); ++m)
                    revt::cmd_eval(
                        cfg, revt::fs::relative(revt::model_file(cfg.out_dir, m), cfg.out_dir)
                                 .string());
            }
        } else if (cosine->parsed()) {
            revt::cmd_cosine(cfg);
        } else if (sweep->parsed()) {
            revt::cmd_sweep(cfg);
        } else if (report->parsed()) {
            revt::cmd_report(cfg);
        }
        return 0;
    } catch (const revt::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const revt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
