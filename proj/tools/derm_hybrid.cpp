// derm-hybrid: batch front end for the skin-lesion classification pipeline.
//
//   derm-hybrid split    --config c.conf            stratified split manifest
//   derm-hybrid prep     --config c.conf            color constancy + resize + masks
//   derm-hybrid features --config c.conf            200-dim handcrafted feature table
//   derm-hybrid train    --config c.conf            full training pipeline
//   derm-hybrid eval     --config c.conf --split test
//   derm-hybrid predict <image> --config c.conf [--mask m.png|--probmaps a.png,b.f32]
//   derm-hybrid synth    --out dir [--per-class n] [--seed s] [--probmaps]

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "derm/dataset.hpp"
#include "derm/pipeline.hpp"
#include "derm/synth.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> master_seed;
    bool no_injection = false;
};

derm::pipeline::PipelineConfig load(const CommonOpts& opts) {
    auto cfg = derm::pipeline::load_config(opts.config_path);
    if (opts.master_seed) derm::pipeline::apply_master_seed(cfg, *opts.master_seed);
    if (opts.no_injection) {
        cfg.train_cfg.use_injection = false;
        cfg.model_a.use_injection = false;
        cfg.model_b.use_injection = false;
    }
    return cfg;
}

void add_common(CLI::App* app, CommonOpts& opts) {
    app->add_option("--config", opts.config_path, "pipeline config file")->required();
    app->add_option("--seed", opts.master_seed, "master seed overriding every stage seed");
    app->add_flag("--no-injection", opts.no_injection,
                  "train/evaluate the image-only ablation (no feature injection)");
}

int fail(const std::string& stage, const std::string& what) {
    std::cerr << "error: stage '" << stage << "' failed: " << what << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid handcrafted/CNN skin-lesion classification pipeline"};
    app.require_subcommand(1);

    CommonOpts split_opts, prep_opts, feat_opts, train_opts, eval_opts, predict_opts;
    std::string eval_split = "test";
    std::string predict_image;
    std::string predict_mask;
    std::string predict_probmaps;

    auto* cmd_split = app.add_subcommand("split", "write the stratified split manifest");
    add_common(cmd_split, split_opts);
    auto* cmd_prep = app.add_subcommand("prep", "preprocess images and resolve lesion masks");
    add_common(cmd_prep, prep_opts);
    auto* cmd_features = app.add_subcommand("features", "extract the 200-dim feature table");
    add_common(cmd_features, feat_opts);
    auto* cmd_train = app.add_subcommand("train", "run the full training pipeline");
    add_common(cmd_train, train_opts);
    auto* cmd_eval = app.add_subcommand("eval", "evaluate the trained pipeline on a split");
    add_common(cmd_eval, eval_opts);
    cmd_eval->add_option("--split", eval_split, "val or test")->check(CLI::IsMember({"val", "test"}));
    auto* cmd_predict = app.add_subcommand("predict", "classify a single image");
    cmd_predict->add_option("image", predict_image, "input PNG image")->required();
    add_common(cmd_predict, predict_opts);
    cmd_predict->add_option("--mask", predict_mask, "ground-truth lesion mask PNG");
    cmd_predict->add_option("--probmaps", predict_probmaps,
                            "comma-separated probability maps (.png or .f32)");

    std::string synth_out;
    int synth_per_class = 100;
    std::uint64_t synth_seed = 0;
    bool synth_probmaps = false;
    int synth_size = 64;
    auto* cmd_synth = app.add_subcommand("synth", "generate the synthetic benchmark dataset");
    cmd_synth->add_option("--out", synth_out, "output directory")->required();
    cmd_synth->add_option("--per-class", synth_per_class, "samples per class");
    cmd_synth->add_option("--seed", synth_seed, "generator seed");
    cmd_synth->add_option("--size", synth_size, "image size in pixels");
    cmd_synth->add_flag("--probmaps", synth_probmaps, "also emit probability-map directories");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_split->parsed()) {
            derm::pipeline::run_split(load(split_opts));
            std::cout << "manifest written\n";
        } else if (cmd_prep->parsed()) {
            derm::pipeline::run_prep(load(prep_opts));
            std::cout << "preprocessed images and masks written\n";
        } else if (cmd_features->parsed()) {
            derm::pipeline::run_features(load(feat_opts));
            std::cout << "feature table written\n";
        } else if (cmd_train->parsed()) {
            const auto cfg = load(train_opts);
            derm::pipeline::run_train_pipeline(cfg);
            std::cout << "training pipeline finished; artifacts in " << cfg.workdir.string()
                      << "\n";
        } else if (cmd_eval->parsed()) {
            const auto cfg = load(eval_opts);
            const auto result = derm::pipeline::run_evaluate(cfg, eval_split);
            std::printf("split=%s BACC=%.4f SPEC=%.4f SENS=%.4f Accuracy=%.4f AUC=%.4f\n",
                        eval_split.c_str(), result.report.bacc, result.report.spec,
                        result.report.sens, result.report.accuracy, result.report.auc);
            std::cout << "report: " << result.metrics_csv.string() << "\n";
        } else if (cmd_predict->parsed()) {
            const auto cfg = load(predict_opts);
            std::optional<std::filesystem::path> mask;
            if (!predict_mask.empty()) mask = predict_mask;
            std::vector<std::filesystem::path> maps;
            std::stringstream ss(predict_probmaps);
            std::string field;
            while (std::getline(ss, field, ',')) {
                if (!field.empty()) maps.emplace_back(field);
            }
            const auto result = derm::pipeline::predict_single(cfg, predict_image, mask, maps);
            if (result.mask_fallback) {
                std::cerr << "warning: no mask source available, used the all-true fallback\n";
            }
            std::cout << "label=" << result.label_name << "\n";
            for (int k = 0; k < derm::hybridnet::kNumClasses; ++k) {
                std::printf("score_%s=%.6f\n",
                            std::string(derm::dataset::kClassNames[k]).c_str(), result.scores[k]);
            }
        } else if (cmd_synth->parsed()) {
            derm::synth::SynthConfig scfg;
            scfg.samples_per_class = synth_per_class;
            scfg.seed = synth_seed;
            scfg.image_size = synth_size;
            scfg.write_probmaps = synth_probmaps;
            derm::synth::generate_dataset(synth_out, scfg);
            std::cout << "synthetic dataset written to " << synth_out << "\n";
        }
    } catch (const derm::pipeline::StageError& e) {
        return fail(e.stage, e.what());
    } catch (const std::exception& e) {
        return fail("unknown", e.what());
    }
    return 0;
}
