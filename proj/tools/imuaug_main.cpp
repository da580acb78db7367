// The imuaug binary: one subcommand per pipeline stage.  All heavy lifting
// lives in the headers; this file is flag wiring plus the exception-to-exit-
// code mapping (0 success, 1 usage/config, 2 data, 3 broken invariant).

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "imuaug/cli.hpp"

int main(int argc, char** argv) {
    using namespace imuaug;

    CLI::App app{"Synthetic IMU exercise repetitions: preprocessing, augmentation, "
                 "labeling and classifier experiments"};
    app.require_subcommand(1);
    int jobs = 1;  // results are worker-count independent; kept for symmetry
    app.add_option("--jobs", jobs, "Worker cap (outputs do not depend on it)");

    PreprocessOptions pre;
    CLI::App* c_pre = app.add_subcommand(
        "preprocess", "Estimate orientations from raw IMU streams and calibrate to segment frames");
    c_pre->add_option("--manifest", pre.manifest, "Raw or pre-oriented dataset manifest")
        ->required();
    c_pre->add_option("--model", pre.model_file, "Skeletal model JSON")->required();
    c_pre->add_option("--out", pre.out_dir, "Output dataset directory");
    c_pre->add_option("--beta", pre.beta, "Orientation filter gain");
    c_pre->callback([&] { cmd_preprocess(pre); });

    AugmentOptions aug;
    CLI::App* c_aug = app.add_subcommand(
        "augment", "Generate auto-labeled augmented repetitions from a real dataset");
    c_aug->add_option("--manifest", aug.manifest, "Source dataset manifest")->required();
    c_aug->add_option("--model", aug.model_file, "Skeletal model JSON")->required();
    c_aug->add_option("--ruleset", aug.ruleset_file, "Labeling ruleset JSON")->required();
    c_aug->add_option("--distributions", aug.distributions_file,
                      "Augmentation distribution JSON (omit to estimate from the dataset)");
    c_aug->add_option("--per-class", aug.per_class, "Accepted examples per source and class");
    c_aug->add_option("--seed", aug.seed, "Master seed");
    c_aug->add_option("--max-attempts", aug.max_attempts, "Attempt cap per (source, class) slot");
    c_aug->add_option("--out", aug.out_dir, "Output directory");
    c_aug->callback([&] { cmd_augment(aug); });

    OptimizeOptions optz;
    CLI::App* c_opt = app.add_subcommand(
        "optimize", "Random-search criterion thresholds against expert labels");
    c_opt->add_option("--manifest", optz.manifest, "Labeled dataset manifest")->required();
    c_opt->add_option("--model", optz.model_file, "Skeletal model JSON")->required();
    c_opt->add_option("--ruleset", optz.ruleset_file, "Base ruleset JSON")->required();
    c_opt->add_option("--budget", optz.budget, "Threshold combinations to try");
    c_opt->add_option("--seed", optz.seed, "Search seed");
    c_opt->add_option("--out", optz.out_dir, "Output directory");
    c_opt->callback([&] { cmd_optimize(optz); });

    ExperimentOptions exp;
    CLI::App* c_exp = app.add_subcommand("experiment", "Run a train/test scenario end to end");
    c_exp->add_option("--config", exp.config_file, "Experiment config JSON")->required();
    c_exp->add_option("--scenario", exp.scenario, "Override the config's scenario");
    c_exp->add_option("--schema", exp.schema_file, "Validate the report against this JSON schema");
    CLI::Option* exp_seed = c_exp->add_option("--seed", exp.seed, "Override the config's seed");
    c_exp->add_option("--out", exp.out_dir, "Output directory");
    c_exp->callback([&] {
        exp.has_seed = exp_seed->count() > 0;
        cmd_experiment(exp);
    });

    FinetuneOptions ft;
    CLI::App* c_ft = app.add_subcommand(
        "finetune", "Adapt a trained checkpoint's dense layers to a small tuning set");
    c_ft->add_option("--checkpoint", ft.checkpoint_in, "Input checkpoint")->required();
    c_ft->add_option("--manifest", ft.manifest, "Tuning dataset manifest")->required();
    c_ft->add_option("--val-manifest", ft.val_manifest,
                     "Validation manifest (defaults to the tuning set)");
    c_ft->add_option("--start-lr", ft.cfg.start_lr, "Schedule start learning rate");
    c_ft->add_option("--peak-lr", ft.cfg.peak_lr, "Schedule peak learning rate");
    c_ft->add_option("--end-lr", ft.cfg.end_lr, "Schedule final learning rate");
    c_ft->add_option("--peak-epoch", ft.cfg.peak_epoch, "Epoch of the schedule peak");
    c_ft->add_option("--epochs", ft.cfg.total_epochs, "Total fine-tuning epochs");
    c_ft->add_option("--batch-size", ft.cfg.batch_size, "Batch size");
    c_ft->add_option("--seed", ft.cfg.seed, "Shuffle/dropout seed");
    c_ft->add_option("--out", ft.out_dir, "Output directory");
    c_ft->callback([&] { cmd_finetune(ft); });

    ExportFeaturesOptions ef;
    CLI::App* c_ef = app.add_subcommand(
        "export-features", "Flatten repetitions into a per-row feature CSV");
    c_ef->add_option("--manifest", ef.manifest, "Dataset manifest")->required();
    c_ef->add_option("--time-steps", ef.time_steps, "Resampled length per segment");
    c_ef->add_option("--out", ef.out_dir, "Output directory");
    c_ef->callback([&] { cmd_export_features(ef); });

    SynthOptions syn;
    CLI::App* c_syn = app.add_subcommand(
        "synth", "Synthesize a labeled corpus from subject/class archetypes");
    c_syn->add_option("--model", syn.model_file, "Skeletal model JSON")->required();
    c_syn->add_option("--ruleset", syn.ruleset_file, "Labeling ruleset JSON")->required();
    c_syn->add_option("--spec", syn.spec_file, "Corpus spec JSON")->required();
    c_syn->add_option("--n", syn.n, "Total repetitions");
    c_syn->add_option("--seed", syn.seed, "Corpus seed");
    c_syn->add_option("--out", syn.out_dir, "Output directory");
    c_syn->callback([&] { cmd_synth(syn); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const InvalidArgument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const InsufficientData& e) {
        std::cerr << "insufficient data: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
