#include "derm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "derm/features.hpp"
#include "derm/io.hpp"
#include "derm/rng.hpp"
#include "derm/segmask.hpp"
#include "derm/synth.hpp"

namespace fs = std::filesystem;

namespace derm::pipeline {

namespace {

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw StageError("config", "line " + std::to_string(lineno) +
                                           ": expected 'key = value', got '" + line + "'");
        }
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

class KvReader {
public:
    explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& dflt) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? dflt : it->second;
    }
    double num(const std::string& key, double dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw StageError("config", "key '" + key + "': bad number '" + it->second + "'");
        }
    }
    std::uint64_t seed(const std::string& key, std::uint64_t dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stoull(it->second);
        } catch (...) {
            throw StageError("config", "key '" + key + "': bad seed '" + it->second + "'");
        }
    }
    bool flag(const std::string& key, bool dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        const std::string& v = it->second;
        if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
        if (v == "0" || v == "false" || v == "no" || v == "off") return false;
        throw StageError("config", "key '" + key + "': bad flag '" + v + "'");
    }
    std::vector<int> int_list(const std::string& key, const std::vector<int>& dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        std::vector<int> out;
        std::stringstream ss(it->second);
        std::string field;
        while (std::getline(ss, field, ',')) {
            field = trim(field);
            if (field.empty()) continue;
            out.push_back(std::stoi(field));
        }
        if (out.empty()) throw StageError("config", "key '" + key + "': empty list");
        return out;
    }
    std::vector<fs::path> path_list(const std::string& key) const {
        auto it = kv_.find(key);
        std::vector<fs::path> out;
        if (it == kv_.end()) return out;
        std::stringstream ss(it->second);
        std::string field;
        while (std::getline(ss, field, ',')) {
            field = trim(field);
            if (!field.empty()) out.emplace_back(field);
        }
        return out;
    }

private:
    std::map<std::string, std::string> kv_;
};

hybridnet::HybridModelConfig parse_model(const KvReader& kv, const std::string& prefix,
                                         int input_size, bool use_injection,
                                         std::uint64_t default_seed) {
    hybridnet::HybridModelConfig cfg;
    cfg.input_w = input_size;
    cfg.input_h = input_size;
    const auto channels = kv.int_list(prefix + "_channels", {16, 32, 64});
    const auto strides = kv.int_list(prefix + "_strides", std::vector<int>(channels.size(), 1));
    const auto pools = kv.int_list(prefix + "_pools", std::vector<int>(channels.size(), 1));
    if (strides.size() != channels.size() || pools.size() != channels.size()) {
        throw StageError("config", prefix + ": channels/strides/pools lengths differ");
    }
    cfg.conv_blocks.clear();
    for (std::size_t i = 0; i < channels.size(); ++i) {
        cfg.conv_blocks.push_back({channels[i], strides[i], pools[i] != 0});
    }
    cfg.conv_embed_dim = channels.back();
    cfg.fc_hidden = static_cast<int>(kv.num(prefix + "_fc_hidden", 64));
    cfg.use_injection = use_injection;
    cfg.seed = kv.seed(prefix + "_seed", default_seed);
    return cfg;
}

// ---------------------------------------------------------------------------
// shared stage helpers
// ---------------------------------------------------------------------------

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Writes through a .partial file, renaming on success so failed stages leave
// only suffixed partial artifacts behind.
template <typename Fn>
void write_artifact(const fs::path& final_path, Fn&& writer) {
    const fs::path partial = final_path.string() + ".partial";
    writer(partial);
    fs::rename(partial, final_path);
}

segmask::ProbMap resize_probmap(const segmask::ProbMap& in, int out_w, int out_h) {
    segmask::ProbMap out(out_w, out_h);
    const double sx = static_cast<double>(in.width) / out_w;
    const double sy = static_cast<double>(in.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(in.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, in.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(in.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, in.width - 1);
            const double wx = fx - x0;
            const double top = in.at(x0, y0) * (1.0 - wx) + in.at(x1, y0) * wx;
            const double bot = in.at(x0, y1) * (1.0 - wx) + in.at(x1, y1) * wx;
            out.at(x, y) = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

segmask::ProbMap mask_to_probmap(const segmask::BinaryMask& m) {
    segmask::ProbMap p(m.width, m.height);
    for (std::size_t i = 0; i < m.values.size(); ++i) p.values[i] = m.values[i] ? 1.0 : 0.0;
    return p;
}

// Final lesion mask at pipeline resolution: probability-map ensemble when
// available, else the ground-truth mask, else an all-true fallback.
segmask::BinaryMask resolve_mask(const PipelineConfig& cfg, const dataset::SampleRecord& rec,
                                 bool* fallback) {
    if (fallback) *fallback = false;
    const int size = cfg.input_size;
    if (!rec.probmap_paths.empty()) {
        std::vector<segmask::ProbMap> maps;
        maps.reserve(rec.probmap_paths.size());
        for (const auto& p : rec.probmap_paths) maps.push_back(io::read_probmap(p));
        const auto ens = segmask::ensemble_average(maps);
        const auto bin = segmask::binarize(resize_probmap(ens, size, size), cfg.mask_threshold);
        return segmask::postprocess_mask(bin);
    }
    if (rec.mask_path) {
        const auto gt = io::read_mask_png(*rec.mask_path);
        auto bin = segmask::binarize(resize_probmap(mask_to_probmap(gt), size, size), 0.5);
        if (bin.foreground_count() == 0) {
            if (fallback) *fallback = true;
            return segmask::BinaryMask(size, size, true);
        }
        return bin;
    }
    if (fallback) *fallback = true;
    return segmask::BinaryMask(size, size, true);
}

std::vector<dataset::SampleRecord> load_records(const PipelineConfig& cfg,
                                                const std::string& stage) {
    if (!fs::exists(cfg.labels_file)) {
        throw StageError(stage, "labels file not found: " + cfg.labels_file.string());
    }
    auto records = dataset::load_manifest(cfg.data_root, cfg.labels_file);
    dataset::attach_probmaps(records, cfg.probmap_dirs);
    return records;
}

dataset::SplitManifest load_split(const PipelineConfig& cfg,
                                  const std::vector<dataset::SampleRecord>& records,
                                  const std::string& stage) {
    const auto paths = artifact_paths(cfg);
    if (!fs::exists(paths.manifest)) {
        throw StageError(stage, "missing artifact " + paths.manifest.string() +
                                    " (run the split stage first)");
    }
    return dataset::apply_manifest_csv(records, paths.manifest);
}

imgproc::ImageRGB load_prep_image(const PipelineConfig& cfg, const std::string& sample_id,
                                  const std::string& stage) {
    const fs::path p = artifact_paths(cfg).prep_dir / (sample_id + ".png");
    if (!fs::exists(p)) {
        throw StageError(stage, "missing preprocessed image " + p.string() +
                                    " (run the prep stage first)");
    }
    return io::read_image_png(p);
}

segmask::BinaryMask load_prep_mask(const PipelineConfig& cfg, const std::string& sample_id,
                                   const std::string& stage) {
    const fs::path p = artifact_paths(cfg).mask_dir / (sample_id + ".png");
    if (!fs::exists(p)) {
        throw StageError(stage, "missing mask " + p.string() + " (run the prep stage first)");
    }
    return io::read_mask_png(p);
}

struct FeatureTable {
    std::unordered_map<std::string, features::FeatureVector> by_id;
};

FeatureTable load_features_artifact(const PipelineConfig& cfg, const std::string& stage) {
    const auto paths = artifact_paths(cfg);
    if (!fs::exists(paths.features)) {
        throw StageError(stage, "missing artifact " + paths.features.string() +
                                    " (run the features stage first)");
    }
    std::vector<std::string> ids;
    std::vector<features::FeatureVector> rows;
    features::load_feature_table(paths.features, ids, rows);
    FeatureTable table;
    for (std::size_t i = 0; i < ids.size(); ++i) table.by_id[ids[i]] = rows[i];
    return table;
}

std::vector<hybridnet::TrainSample> build_samples(const PipelineConfig& cfg,
                                                  const std::vector<dataset::SampleRecord>& recs,
                                                  const FeatureTable& table,
                                                  const features::Standardizer& stdz,
                                                  const std::string& stage) {
    std::vector<hybridnet::TrainSample> out;
    out.reserve(recs.size());
    for (const auto& rec : recs) {
        auto it = table.by_id.find(rec.sample_id);
        if (it == table.by_id.end()) {
            throw StageError(stage, "sample " + rec.sample_id + " missing from the feature table");
        }
        hybridnet::TrainSample s;
        s.image = load_prep_image(cfg, rec.sample_id, stage);
        s.hand = features::apply_standardizer(stdz, it->second);
        s.label = static_cast<int>(rec.label);
        out.push_back(std::move(s));
    }
    return out;
}

// Embedding row for the fusion SVM: model A embedding ++ model B embedding
// (++ the standardized handcrafted vector when configured).
std::vector<double> fusion_embedding(const PipelineConfig& cfg, const hybridnet::HybridModel& a,
                                     const hybridnet::HybridModel& b,
                                     const imgproc::ImageRGB& img,
                                     const features::FeatureVector& hand_std) {
    // Injection mode comes from each checkpoint, so eval/predict work on
    // --no-injection artifacts without repeating the flag.
    const features::FeatureVector* hand_a = a.config.use_injection ? &hand_std : nullptr;
    const features::FeatureVector* hand_b = b.config.use_injection ? &hand_std : nullptr;
    std::vector<double> row;
    if (cfg.tta_samples > 0) {
        // Opt-in test-time augmentation: average embeddings over seeded variants.
        std::vector<double> ea(a.config.fc_hidden, 0.0), eb(b.config.fc_hidden, 0.0);
        for (int t = 0; t < cfg.tta_samples; ++t) {
            imgproc::AugmentParams params = cfg.aug;
            params.seed = derive_seed(cfg.aug.seed, 0xA0000000ULL + t);
            const auto aug = imgproc::augment(img, params);
            const auto va = hybridnet::embed(a, aug, hand_a);
            const auto vb = hybridnet::embed(b, aug, hand_b);
            for (std::size_t i = 0; i < ea.size(); ++i) ea[i] += va[i];
            for (std::size_t i = 0; i < eb.size(); ++i) eb[i] += vb[i];
        }
        for (double& v : ea) v /= cfg.tta_samples;
        for (double& v : eb) v /= cfg.tta_samples;
        row.insert(row.end(), ea.begin(), ea.end());
        row.insert(row.end(), eb.begin(), eb.end());
    } else {
        const auto ea = hybridnet::embed(a, img, hand_a);
        const auto eb = hybridnet::embed(b, img, hand_b);
        row.insert(row.end(), ea.begin(), ea.end());
        row.insert(row.end(), eb.begin(), eb.end());
    }
    if (cfg.svm_include_handcrafted) {
        row.insert(row.end(), hand_std.values.begin(), hand_std.values.end());
    }
    return row;
}

}  // namespace

// ---------------------------------------------------------------------------
// config surface
// ---------------------------------------------------------------------------

PipelineConfig parse_config_text(const std::string& text) {
    const auto raw = parse_kv(text);
    static const std::set<std::string> known{
        "data_root", "labels_file", "workdir", "probmap_dirs",
        "split_seed", "train_frac", "test_frac", "val_frac_of_train", "train_on_val",
        "sog_p", "input_size",
        "augment_copies", "aug_seed", "crop_lo", "crop_hi", "rot_lo", "rot_hi",
        "shear_lo", "shear_hi", "allow_hflip", "allow_vflip", "tta_samples",
        "mask_threshold",
        "model_a_channels", "model_a_strides", "model_a_pools", "model_a_fc_hidden", "model_a_seed",
        "model_b_channels", "model_b_strides", "model_b_pools", "model_b_fc_hidden", "model_b_seed",
        "lr", "epochs", "batch_size", "momentum", "train_seed", "use_injection",
        "svm_reg_c", "svm_seed", "svm_grid", "svm_include_handcrafted",
        "averaging", "write_roc",
    };
    for (const auto& [key, value] : raw) {
        (void)value;
        if (!known.count(key)) throw StageError("config", "unknown config key '" + key + "'");
    }
    const KvReader kv(raw);
    PipelineConfig cfg;
    cfg.data_root = kv.str("data_root", "");
    cfg.labels_file = kv.str("labels_file", "");
    cfg.workdir = kv.str("workdir", "");
    cfg.probmap_dirs = kv.path_list("probmap_dirs");

    cfg.ratios.train_frac = kv.num("train_frac", 0.7);
    cfg.ratios.test_frac = kv.num("test_frac", 0.3);
    cfg.ratios.val_frac_of_train = kv.num("val_frac_of_train", 0.1);
    cfg.split_seed = kv.seed("split_seed", 0);
    cfg.train_on_val = kv.flag("train_on_val", false);

    cfg.sog_p = kv.num("sog_p", 6.0);
    cfg.input_size = static_cast<int>(kv.num("input_size", 64));

    cfg.augment_copies = static_cast<int>(kv.num("augment_copies", 0));
    cfg.aug.crop_lo = kv.num("crop_lo", 0.8);
    cfg.aug.crop_hi = kv.num("crop_hi", 1.0);
    cfg.aug.rot_lo = kv.num("rot_lo", 0.0);
    cfg.aug.rot_hi = kv.num("rot_hi", 180.0);
    cfg.aug.shear_lo = kv.num("shear_lo", 0.0);
    cfg.aug.shear_hi = kv.num("shear_hi", 30.0);
    cfg.aug.allow_hflip = kv.flag("allow_hflip", true);
    cfg.aug.allow_vflip = kv.flag("allow_vflip", true);
    cfg.aug.seed = kv.seed("aug_seed", 0);
    cfg.tta_samples = static_cast<int>(kv.num("tta_samples", 0));

    cfg.mask_threshold = kv.num("mask_threshold", 0.5);

    cfg.train_cfg.learning_rate = kv.num("lr", 0.01);
    cfg.train_cfg.epochs = static_cast<int>(kv.num("epochs", 10));
    cfg.train_cfg.batch_size = static_cast<int>(kv.num("batch_size", 16));
    cfg.train_cfg.momentum = kv.num("momentum", 0.9);
    cfg.train_cfg.seed = kv.seed("train_seed", 0);
    cfg.train_cfg.use_injection = kv.flag("use_injection", true);

    cfg.model_a = parse_model(kv, "model_a", cfg.input_size, cfg.train_cfg.use_injection, 11);
    cfg.model_b = parse_model(kv, "model_b", cfg.input_size, cfg.train_cfg.use_injection, 22);

    cfg.svm_reg_c = kv.num("svm_reg_c", 1.0);
    cfg.svm_seed = kv.seed("svm_seed", 0);
    cfg.svm_grid = kv.flag("svm_grid", false);
    cfg.svm_include_handcrafted = kv.flag("svm_include_handcrafted", false);

    const std::string avg = kv.str("averaging", "macro");
    if (avg == "macro") cfg.averaging = metrics::Averaging::Macro;
    else if (avg == "micro") cfg.averaging = metrics::Averaging::Micro;
    else throw StageError("config", "averaging must be 'macro' or 'micro', got '" + avg + "'");
    cfg.write_roc = kv.flag("write_roc", false);
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw StageError("config", "cannot open config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    PipelineConfig cfg = parse_config_text(buf.str());

    if (const char* env = std::getenv("DERM_HYBRID_WORKDIR"); env && *env) {
        cfg.workdir = env;
    }
    if (cfg.data_root.empty() || cfg.labels_file.empty() || cfg.workdir.empty()) {
        throw StageError("config", "data_root, labels_file and workdir are required");
    }
    if (!fs::exists(cfg.data_root)) {
        throw StageError("config", "data_root does not exist: " + cfg.data_root.string());
    }
    if (!fs::exists(cfg.labels_file)) {
        throw StageError("config", "labels_file does not exist: " + cfg.labels_file.string());
    }
    for (const auto& d : cfg.probmap_dirs) {
        if (!fs::exists(d)) {
            throw StageError("config", "probmap dir does not exist: " + d.string());
        }
    }
    return cfg;
}

void apply_master_seed(PipelineConfig& cfg, std::uint64_t master) {
    cfg.split_seed = derive_seed(master, 1);
    cfg.aug.seed = derive_seed(master, 2);
    cfg.model_a.seed = derive_seed(master, 3);
    cfg.model_b.seed = derive_seed(master, 4);
    cfg.train_cfg.seed = derive_seed(master, 5);
    cfg.svm_seed = derive_seed(master, 6);
}

ArtifactPaths artifact_paths(const PipelineConfig& cfg) {
    ArtifactPaths p;
    p.manifest = cfg.workdir / "manifest.csv";
    p.features = cfg.workdir / "features.csv";
    p.catalog = cfg.workdir / "catalog.csv";
    p.standardizer = cfg.workdir / "standardizer.csv";
    p.model_a = cfg.workdir / "model_a.hybn";
    p.model_b = cfg.workdir / "model_b.hybn";
    p.history_a = cfg.workdir / "history_a.csv";
    p.history_b = cfg.workdir / "history_b.csv";
    p.svm = cfg.workdir / "svm.csv";
    p.run_log = cfg.workdir / "run.log";
    p.prep_dir = cfg.workdir / "prep";
    p.mask_dir = cfg.workdir / "masks";
    return p;
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

void run_split(const PipelineConfig& cfg) {
    const auto paths = artifact_paths(cfg);
    fs::create_directories(cfg.workdir);
    const auto records = load_records(cfg, "split");
    const auto manifest = dataset::stratified_split(records, cfg.ratios, cfg.split_seed);
    write_artifact(paths.manifest,
                   [&](const fs::path& p) { dataset::save_manifest_csv(manifest, p); });
}

void run_prep(const PipelineConfig& cfg) {
    const auto paths = artifact_paths(cfg);
    fs::create_directories(paths.prep_dir);
    fs::create_directories(paths.mask_dir);
    const auto records = load_records(cfg, "prep");
    for (const auto& rec : records) {
        const auto raw = io::read_image_png(rec.image_path);
        const auto corrected = imgproc::shades_of_gray(raw, cfg.sog_p);
        const auto resized = imgproc::resize_bilinear(corrected, cfg.input_size, cfg.input_size);
        write_artifact(paths.prep_dir / (rec.sample_id + ".png"),
                       [&](const fs::path& p) { io::write_image_png(p, resized); });
        const auto mask = resolve_mask(cfg, rec, nullptr);
        write_artifact(paths.mask_dir / (rec.sample_id + ".png"),
                       [&](const fs::path& p) { io::write_mask_png(p, mask); });
    }
}

void run_features(const PipelineConfig& cfg) {
    const auto paths = artifact_paths(cfg);
    fs::create_directories(cfg.workdir);
    const auto records = load_records(cfg, "features");

    std::vector<std::string> ids;
    std::vector<features::FeatureVector> rows;
    ids.reserve(records.size());
    rows.reserve(records.size());
    for (const auto& rec : records) {
        const auto img = load_prep_image(cfg, rec.sample_id, "features");
        const auto mask = load_prep_mask(cfg, rec.sample_id, "features");
        ids.push_back(rec.sample_id);
        rows.push_back(features::extract_features(img, mask));
    }
    write_artifact(paths.features,
                   [&](const fs::path& p) { features::save_feature_table(p, ids, rows); });
    write_artifact(paths.catalog, [&](const fs::path& p) { features::save_catalog_csv(p); });
}

void run_train_pipeline(const PipelineConfig& cfg) {
    const auto paths = artifact_paths(cfg);
    fs::create_directories(cfg.workdir);
    std::ofstream log(paths.run_log, std::ios::trunc);
    log << "derm-hybrid training pipeline\n";
    log << "rng=" << kRngAlgorithmId << "\n";

    run_split(cfg);
    const auto records = load_records(cfg, "split");
    const auto manifest = load_split(cfg, records, "split");
    log << "stage=split train=" << manifest.train.size() << " val=" << manifest.val.size()
        << " test=" << manifest.test.size() << " seed=" << cfg.split_seed << "\n";

    run_prep(cfg);
    log << "stage=prep n=" << records.size() << " sog_p=" << cfg.sog_p
        << " size=" << cfg.input_size << "\n";

    run_features(cfg);
    log << "stage=features n=" << records.size() << " catalog=" << features::kCatalogVersion
        << "\n";

    // Standardizer over training rows only; the test split never reaches any
    // fitted statistic.
    const auto table = load_features_artifact(cfg, "standardizer");
    std::vector<dataset::SampleRecord> fit_records = manifest.train;
    if (cfg.train_on_val) {
        fit_records.insert(fit_records.end(), manifest.val.begin(), manifest.val.end());
    }
    std::vector<features::FeatureVector> fit_rows;
    for (const auto& rec : fit_records) {
        auto it = table.by_id.find(rec.sample_id);
        if (it == table.by_id.end()) {
            throw StageError("standardizer", "sample " + rec.sample_id + " missing from features");
        }
        fit_rows.push_back(it->second);
    }
    const auto stdz = features::fit_standardizer(fit_rows);
    write_artifact(paths.standardizer,
                   [&](const fs::path& p) { features::save_standardizer_csv(stdz, p); });
    log << "stage=standardizer fit_rows=train_only n=" << fit_rows.size()
        << " (test split excluded from every fitted statistic)\n";

    auto train_samples = build_samples(cfg, fit_records, table, stdz, "train");
    const auto val_samples = cfg.train_on_val
        ? std::vector<hybridnet::TrainSample>{}
        : build_samples(cfg, manifest.val, table, stdz, "train");

    if (cfg.augment_copies > 0) {
        const std::size_t base = train_samples.size();
        for (std::size_t i = 0; i < base; ++i) {
            for (int copy = 0; copy < cfg.augment_copies; ++copy) {
                imgproc::AugmentParams params = cfg.aug;
                params.seed = derive_seed(cfg.aug.seed, i * 1000003ULL + copy);
                hybridnet::TrainSample s;
                s.image = imgproc::augment(train_samples[i].image, params);
                // Augmented copies reuse the source sample's handcrafted
                // vector; the mask geometry is not re-derived per copy.
                s.hand = train_samples[i].hand;
                s.label = train_samples[i].label;
                train_samples.push_back(std::move(s));
            }
        }
        log << "stage=augment copies=" << cfg.augment_copies
            << " total_train=" << train_samples.size() << "\n";
    }

    const auto val_ptr = val_samples.empty() ? nullptr : &val_samples;
    for (int which = 0; which < 2; ++which) {
        const auto& model_cfg = which == 0 ? cfg.model_a : cfg.model_b;
        const auto& ckpt = which == 0 ? paths.model_a : paths.model_b;
        const auto& hist = which == 0 ? paths.history_a : paths.history_b;
        auto model = hybridnet::init_model(model_cfg);
        auto result = hybridnet::train(model, train_samples, cfg.train_cfg, val_ptr);
        write_artifact(ckpt, [&](const fs::path& p) { hybridnet::save_model(result.model, p); });
        write_artifact(hist,
                       [&](const fs::path& p) { hybridnet::save_history_csv(result.history, p); });
        log << "stage=train_model" << (which == 0 ? "[a]" : "[b]")
            << " epochs=" << cfg.train_cfg.epochs << " injection="
            << (cfg.train_cfg.use_injection ? "on" : "off") << " final_loss="
            << (result.history.empty() ? 0.0 : result.history.back().train_loss) << "\n";
    }

    // Fusion SVM over concatenated penultimate embeddings of both models.
    const auto model_a = hybridnet::load_model(paths.model_a);
    const auto model_b = hybridnet::load_model(paths.model_b);
    std::vector<std::vector<double>> emb;
    std::vector<int> labels;
    for (const auto& rec : fit_records) {
        const auto img = load_prep_image(cfg, rec.sample_id, "svm");
        const auto hand = features::apply_standardizer(stdz, table.by_id.at(rec.sample_id));
        emb.push_back(fusion_embedding(cfg, model_a, model_b, img, hand));
        labels.push_back(static_cast<int>(rec.label));
    }
    const auto scaler = fusion::fit_column_scaler(emb);
    std::vector<std::vector<double>> emb_std;
    emb_std.reserve(emb.size());
    for (const auto& row : emb) emb_std.push_back(fusion::apply_column_scaler(scaler, row));

    double reg_c = cfg.svm_reg_c;
    if (cfg.svm_grid && !manifest.val.empty() && !cfg.train_on_val) {
        std::vector<std::vector<double>> val_emb;
        std::vector<int> val_truth;
        for (const auto& rec : manifest.val) {
            const auto img = load_prep_image(cfg, rec.sample_id, "svm");
            const auto hand = features::apply_standardizer(stdz, table.by_id.at(rec.sample_id));
            val_emb.push_back(fusion::apply_column_scaler(
                scaler, fusion_embedding(cfg, model_a, model_b, img, hand)));
            val_truth.push_back(static_cast<int>(rec.label));
        }
        double best_bacc = -1.0;
        for (double cand : {0.01, 0.1, 1.0, 10.0}) {
            const auto m = fusion::svm_fit(emb_std, labels, cand, cfg.svm_seed);
            std::vector<int> pred;
            for (const auto& row : val_emb) pred.push_back(fusion::svm_predict(m, row).first);
            const double bacc =
                metrics::summarize(metrics::confusion_matrix(pred, val_truth, 7)).bacc;
            if (bacc > best_bacc) {
                best_bacc = bacc;
                reg_c = cand;
            }
        }
        log << "stage=svm_grid selected_reg_c=" << reg_c << " val_bacc=" << best_bacc << "\n";
    }

    const auto svm = fusion::svm_fit(emb_std, labels, reg_c, cfg.svm_seed);
    // The scaler is folded into the stored weights so the model file acts on
    // raw embeddings and stays self-contained.
    const auto folded = fusion::fold_scaler(svm, scaler);
    write_artifact(paths.svm, [&](const fs::path& p) { fusion::save_svm_csv(folded, p); });
    log << "stage=svm fit_rows=train_only n=" << emb_std.size() << " reg_c=" << reg_c
        << " dim=" << folded.dim << "\n";
    log << "status=ok\n";
}

EvalResult run_evaluate(const PipelineConfig& cfg, const std::string& split) {
    const auto paths = artifact_paths(cfg);
    for (const auto& req : {paths.manifest, paths.features, paths.standardizer, paths.model_a,
                            paths.model_b, paths.svm}) {
        if (!fs::exists(req)) {
            throw StageError("eval", "missing artifact " + req.string() +
                                         " (run the train pipeline first)");
        }
    }
    const auto records = load_records(cfg, "eval");
    const auto manifest = load_split(cfg, records, "eval");
    const std::vector<dataset::SampleRecord>* chosen = nullptr;
    if (split == "val") chosen = &manifest.val;
    else if (split == "test") chosen = &manifest.test;
    else throw StageError("eval", "split must be 'val' or 'test', got '" + split + "'");
    if (chosen->empty()) throw StageError("eval", "split '" + split + "' is empty");

    const auto table = load_features_artifact(cfg, "eval");
    const auto stdz = features::load_standardizer_csv(paths.standardizer);
    const auto model_a = hybridnet::load_model(paths.model_a);
    const auto model_b = hybridnet::load_model(paths.model_b);
    const auto svm = fusion::load_svm_csv(paths.svm);

    std::vector<int> pred, truth;
    std::vector<double> score_matrix;
    for (const auto& rec : *chosen) {
        const auto img = load_prep_image(cfg, rec.sample_id, "eval");
        auto it = table.by_id.find(rec.sample_id);
        if (it == table.by_id.end()) {
            throw StageError("eval", "sample " + rec.sample_id + " missing from the feature table");
        }
        const auto hand = features::apply_standardizer(stdz, it->second);
        const auto row = fusion_embedding(cfg, model_a, model_b, img, hand);
        const auto [label, scores] = fusion::svm_predict(svm, row);
        pred.push_back(label);
        truth.push_back(static_cast<int>(rec.label));
        score_matrix.insert(score_matrix.end(), scores.begin(), scores.end());
    }

    EvalResult result;
    result.confusion = metrics::confusion_matrix(pred, truth, hybridnet::kNumClasses);
    result.report = metrics::summarize(result.confusion, cfg.averaging);
    result.report.auc = metrics::roc_auc_macro(score_matrix, hybridnet::kNumClasses, truth,
                                               nullptr, &result.report.per_class);

    result.metrics_csv = cfg.workdir / ("metrics_" + split + ".csv");
    result.confusion_csv = cfg.workdir / ("confusion_" + split + ".csv");

    write_artifact(result.metrics_csv, [&](const fs::path& p) {
        std::ofstream out(p, std::ios::trunc);
        if (!out) throw StageError("eval", "cannot write " + p.string());
        out << "metric,value\n";
        out << "BACC," << format_double(result.report.bacc) << "\n";
        out << "SPEC," << format_double(result.report.spec) << "\n";
        out << "SENS," << format_double(result.report.sens) << "\n";
        out << "Accuracy," << format_double(result.report.accuracy) << "\n";
        out << "AUC," << format_double(result.report.auc) << "\n";
        for (const auto& pc : result.report.per_class) {
            const auto name = dataset::kClassNames[pc.label];
            out << "SENS_" << name << ',' << format_double(pc.sens) << "\n";
            out << "SPEC_" << name << ',' << format_double(pc.spec) << "\n";
            out << "AUC_" << name << ',' << format_double(pc.auc) << "\n";
        }
    });
    write_artifact(result.confusion_csv, [&](const fs::path& p) {
        std::ofstream out(p, std::ios::trunc);
        if (!out) throw StageError("eval", "cannot write " + p.string());
        out << "truth\\pred";
        for (const auto& name : dataset::kClassNames) out << ',' << name;
        out << '\n';
        for (int t = 0; t < hybridnet::kNumClasses; ++t) {
            out << dataset::kClassNames[t];
            for (int q = 0; q < hybridnet::kNumClasses; ++q) out << ',' << result.confusion.at(t, q);
            out << '\n';
        }
    });

    if (cfg.write_roc) {
        for (int c = 0; c < hybridnet::kNumClasses; ++c) {
            std::vector<double> scores;
            std::vector<int> binary;
            bool both = false;
            for (std::size_t i = 0; i < truth.size(); ++i) {
                scores.push_back(score_matrix[i * hybridnet::kNumClasses + c]);
                binary.push_back(truth[i] == c ? 1 : 0);
            }
            both = std::count(binary.begin(), binary.end(), 1) > 0 &&
                   std::count(binary.begin(), binary.end(), 0) > 0;
            if (!both) continue;
            const auto curve = metrics::roc_curve(scores, binary);
            const fs::path p =
                cfg.workdir / ("roc_" + split + "_" + std::string(dataset::kClassNames[c]) + ".csv");
            write_artifact(p, [&](const fs::path& pp) {
                std::ofstream out(pp, std::ios::trunc);
                out << "fpr,tpr\n";
                for (const auto& [fpr, tpr] : curve) {
                    out << format_double(fpr) << ',' << format_double(tpr) << '\n';
                }
            });
        }
    }
    return result;
}

PredictResult predict_single(const PipelineConfig& cfg, const fs::path& image,
                             const std::optional<fs::path>& mask,
                             const std::vector<fs::path>& probmaps) {
    const auto paths = artifact_paths(cfg);
    for (const auto& req : {paths.standardizer, paths.model_a, paths.model_b, paths.svm}) {
        if (!fs::exists(req)) {
            throw StageError("predict", "missing artifact " + req.string() +
                                            " (run the train pipeline first)");
        }
    }
    if (!fs::exists(image)) throw StageError("predict", "image not found: " + image.string());

    const auto stdz = features::load_standardizer_csv(paths.standardizer);
    const auto model_a = hybridnet::load_model(paths.model_a);
    const auto model_b = hybridnet::load_model(paths.model_b);
    const auto svm = fusion::load_svm_csv(paths.svm);

    const auto raw = io::read_image_png(image);
    const auto corrected = imgproc::shades_of_gray(raw, cfg.sog_p);
    const auto img = imgproc::resize_bilinear(corrected, cfg.input_size, cfg.input_size);

    dataset::SampleRecord rec;
    rec.sample_id = image.stem().string();
    rec.image_path = image;
    if (mask) rec.mask_path = *mask;
    rec.probmap_paths = probmaps;
    bool fallback = false;
    const auto lesion = resolve_mask(cfg, rec, &fallback);

    const auto hand = features::apply_standardizer(stdz, features::extract_features(img, lesion));
    const auto row = fusion_embedding(cfg, model_a, model_b, img, hand);
    const auto [label, scores] = fusion::svm_predict(svm, row);

    PredictResult result;
    result.label = label;
    result.label_name = std::string(dataset::kClassNames[label]);
    result.scores = scores;
    result.mask_fallback = fallback;
    return result;
}

}  // namespace derm::pipeline
