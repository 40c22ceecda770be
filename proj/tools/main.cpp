// shape2field command line: generate Poisson datasets over random star
// domains, train/evaluate the point-cloud neural operator, run the
// robustness protocol, and predict fields for arbitrary boundary/query
// CSVs.

#include <iostream>

#include <CLI11.hpp>

#include "shape2field/commands.hpp"

using namespace s2f;

int main(int argc, char** argv) {
    CLI::App app{"boundary point cloud -> solution field neural operator"};
    app.require_subcommand(1);

    uint64_t seed = 0;
    app.add_option("--seed", seed, "global RNG seed")->capture_default_str();

    // generate
    auto* gen = app.add_subcommand("generate", "create a Poisson dataset");
    cmd::GenerateArgs gen_args;
    gen->add_option("--n-samples", gen_args.n_samples)->capture_default_str();
    gen->add_option("--grid-n", gen_args.grid_n)->capture_default_str();
    gen->add_option("--lambda-min", gen_args.lambda_min)->capture_default_str();
    gen->add_option("--lambda-max", gen_args.lambda_max)->capture_default_str();
    gen->add_option("--out", gen_args.out, "output container base path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model on a dataset");
    cmd::TrainArgs train_args;
    std::string config_path;
    int64_t epochs_flag = -1;
    uint64_t split_seed_flag = 0;
    bool has_split_seed = false;
    tr->add_option("--dataset", train_args.dataset)->required();
    tr->add_option("--out", train_args.out_dir, "run directory")->required();
    tr->add_option("--config", config_path, "flat JSON run config");
    tr->add_option("--epochs", epochs_flag, "override the config epoch count");
    tr->add_option("--resume", train_args.resume_checkpoint, "checkpoint base path to resume");
    tr->add_flag("--extended", train_args.config.extended,
                 "enable the extra-input (load) encoder");
    tr->add_option("--split-seed", split_seed_flag,
                   "re-split train/test instead of using the dataset split")
        ->each([&](const std::string&) { has_split_seed = true; });
    tr->add_flag("--quiet", train_args.quiet);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    cmd::EvalArgs eval_args;
    ev->add_option("--checkpoint", eval_args.checkpoint)->required();
    ev->add_option("--dataset", eval_args.dataset)->required();
    ev->add_option("--split", eval_args.split, "train|test|all")->capture_default_str();
    ev->add_option("--out", eval_args.out_dir, "directory for metrics.json / per_sample.csv");

    // infer
    auto* in = app.add_subcommand("infer", "predict fields for boundary/query CSVs");
    cmd::InferArgs infer_args;
    in->add_option("--checkpoint", infer_args.checkpoint)->required();
    in->add_option("--boundary", infer_args.boundary_csv, "boundary x,y CSV")->required();
    in->add_option("--queries", infer_args.query_csv, "query x,y CSV")->required();
    in->add_option("--out", infer_args.out_csv, "output CSV")->required();
    in->add_option("--load", infer_args.load, "extra scalar input for extended models")
        ->capture_default_str();

    // robustness
    auto* rb = app.add_subcommand("robustness",
                                  "shuffle/pad/density protocol on a trained checkpoint");
    cmd::RobustnessArgs rob_args;
    rb->add_option("--checkpoint", rob_args.checkpoint)->required();
    rb->add_option("--dataset", rob_args.dataset)->required();
    rb->add_option("--split", rob_args.split)->capture_default_str();
    rb->add_option("--out", rob_args.out_csv, "output CSV");
    rb->add_option("--max-samples", rob_args.max_samples,
                   "cap the number of evaluated samples (0 = all)")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            gen_args.seed = seed;
            cmd::generate(gen_args, std::cout);
        } else if (tr->parsed()) {
            if (!config_path.empty()) {
                const bool extended_flag = train_args.config.extended;
                train_args.config = RunConfig::from_file(config_path);
                train_args.config.extended = train_args.config.extended || extended_flag;
            }
            if (epochs_flag >= 0) {
                train_args.config.epochs = epochs_flag;
            }
            train_args.seed = seed;
            if (has_split_seed) {
                train_args.split_seed = split_seed_flag;
            }
            cmd::train(train_args, std::cout);
        } else if (ev->parsed()) {
            cmd::eval(eval_args, std::cout);
        } else if (in->parsed()) {
            cmd::infer(infer_args, std::cout);
        } else if (rb->parsed()) {
            rob_args.seed = seed;
            cmd::robustness(rob_args, std::cout);
        }
    } catch (const CliError& ex) {
        std::cerr << "error: " << ex.code << ": " << ex.what() << "\n";
        return 1;
    } catch (const std::exception& ex) {
        std::cerr << "error: E_RUNTIME: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
