#include "derm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "derm/rng.hpp"

namespace fs = std::filesystem;

namespace derm::dataset {

namespace {

std::string trim(std::string s) {
    const auto issp = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && issp(s.back())) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && issp(s[i])) ++i;
    return s.substr(i);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

struct SplitCounts {
    std::size_t train_pre = 0;
    std::size_t val = 0;
};

}  // namespace

ClassLabel parse_label(std::string_view text) {
    for (int i = 0; i < kNumClasses; ++i) {
        if (text == kClassNames[i]) return static_cast<ClassLabel>(i);
    }
    throw std::runtime_error("unknown label " + std::string(text));
}

std::string_view label_name(ClassLabel label) {
    return kClassNames[static_cast<int>(label)];
}

std::vector<SampleRecord> load_manifest(const fs::path& root, const fs::path& labels_file) {
    std::ifstream in(labels_file);
    if (!in) throw std::runtime_error("cannot open labels file: " + labels_file.string());

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("labels file is empty: " + labels_file.string());
    const auto header = split_csv_line(line);
    if (header.size() != 2 || header[0] != "sample_id" || header[1] != "label") {
        throw std::runtime_error("labels file must start with header 'sample_id,label'");
    }

    std::vector<SampleRecord> records;
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw std::runtime_error("malformed labels row: " + line);
        }
        SampleRecord rec;
        rec.sample_id = fields[0];
        rec.label = parse_label(fields[1]);
        if (!seen.insert(rec.sample_id).second) {
            throw std::runtime_error("duplicate sample_id " + rec.sample_id);
        }
        rec.image_path = root / (rec.sample_id + ".png");
        if (!fs::exists(rec.image_path)) {
            throw std::runtime_error("missing image file for sample " + rec.sample_id + ": " +
                                     rec.image_path.string());
        }
        fs::path mask = root / (rec.sample_id + "_mask.png");
        if (fs::exists(mask)) rec.mask_path = mask;
        records.push_back(std::move(rec));
    }
    return records;
}

void attach_probmaps(std::vector<SampleRecord>& records,
                     const std::vector<fs::path>& probmap_dirs) {
    for (auto& rec : records) {
        rec.probmap_paths.clear();
        for (const auto& dir : probmap_dirs) {
            const fs::path f32 = dir / (rec.sample_id + ".f32");
            const fs::path png = dir / (rec.sample_id + ".png");
            if (fs::exists(f32)) {
                rec.probmap_paths.push_back(f32);
            } else if (fs::exists(png)) {
                rec.probmap_paths.push_back(png);
            }
        }
    }
}

std::size_t round_half_up(double x) {
    // The epsilon absorbs binary representation error in n * frac (e.g.
    // 115 * 0.7 evaluates just below 80.5 in doubles and must round to 81).
    return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
}

SplitManifest stratified_split(const std::vector<SampleRecord>& records,
                               const SplitRatios& ratios, std::uint64_t seed) {
    if (records.empty()) throw std::runtime_error("stratified_split: empty record list");
    if (!(ratios.train_frac > 0.0 && ratios.train_frac < 1.0) ||
        !(ratios.test_frac > 0.0 && ratios.test_frac < 1.0) ||
        std::abs(ratios.train_frac + ratios.test_frac - 1.0) > 1e-9) {
        throw std::invalid_argument("stratified_split: train_frac + test_frac must equal 1, both in (0,1)");
    }
    if (ratios.val_frac_of_train < 0.0 || ratios.val_frac_of_train >= 1.0) {
        throw std::invalid_argument("stratified_split: val_frac_of_train must lie in [0,1)");
    }

    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) {
        by_class[static_cast<int>(records[i].label)].push_back(i);
    }

    // 0 = train, 1 = val, 2 = test
    std::vector<int> assignment(records.size(), -1);
    SplitManifest manifest;
    manifest.seed = seed;
    manifest.ratios = ratios;

    for (int c = 0; c < kNumClasses; ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) continue;
        if (idx.size() < 3) {
            throw std::runtime_error("stratified_split: class " + std::string(kClassNames[c]) +
                                     " has fewer than 3 samples");
        }
        const std::size_t n = idx.size();
        const std::size_t train_pre = round_half_up(static_cast<double>(n) * ratios.train_frac);
        const std::size_t val_n = ratios.val_frac_of_train > 0.0
            ? round_half_up(static_cast<double>(train_pre) * ratios.val_frac_of_train)
            : 0;

        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
        rng.shuffle(idx);

        // Permuted class order: [train | val | test].
        for (std::size_t i = 0; i < n; ++i) {
            if (i < train_pre - val_n) assignment[idx[i]] = 0;
            else if (i < train_pre) assignment[idx[i]] = 1;
            else assignment[idx[i]] = 2;
        }
        manifest.train_counts_pre_carve[c] = train_pre;
        manifest.train_counts_post_carve[c] = train_pre - val_n;
    }

    // Output lists preserve the input record order.
    for (std::size_t i = 0; i < records.size(); ++i) {
        switch (assignment[i]) {
            case 0: manifest.train.push_back(records[i]); break;
            case 1: manifest.val.push_back(records[i]); break;
            case 2: manifest.test.push_back(records[i]); break;
            default: break;
        }
    }
    return manifest;
}

void save_manifest_csv(const SplitManifest& manifest, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
    out << "sample_id,label,split\n";
    for (const auto& r : manifest.train) {
        out << r.sample_id << ',' << label_name(r.label) << ",train\n";
    }
    for (const auto& r : manifest.val) {
        out << r.sample_id << ',' << label_name(r.label) << ",val\n";
    }
    for (const auto& r : manifest.test) {
        out << r.sample_id << ',' << label_name(r.label) << ",test\n";
    }
    if (!out) throw std::runtime_error("failed writing manifest: " + path.string());
}

SplitManifest apply_manifest_csv(const std::vector<SampleRecord>& records, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());

    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"sample_id", "label", "split"}) {
        throw std::runtime_error("manifest must start with header 'sample_id,label,split'");
    }

    std::unordered_map<std::string, int> split_of;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3) throw std::runtime_error("malformed manifest row: " + line);
        int s;
        if (fields[2] == "train") s = 0;
        else if (fields[2] == "val") s = 1;
        else if (fields[2] == "test") s = 2;
        else throw std::runtime_error("unknown split '" + fields[2] + "' in manifest");
        split_of[fields[0]] = s;
    }

    std::unordered_map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < records.size(); ++i) index_of[records[i].sample_id] = i;
    for (const auto& [id, s] : split_of) {
        (void)s;
        if (!index_of.count(id)) {
            throw std::runtime_error("manifest names unknown sample_id " + id);
        }
    }

    SplitManifest manifest;
    for (const auto& rec : records) {
        auto it = split_of.find(rec.sample_id);
        if (it == split_of.end()) {
            throw std::runtime_error("sample " + rec.sample_id + " missing from manifest");
        }
        const int c = static_cast<int>(rec.label);
        switch (it->second) {
            case 0:
                manifest.train.push_back(rec);
                ++manifest.train_counts_pre_carve[c];
                ++manifest.train_counts_post_carve[c];
                break;
            case 1:
                manifest.val.push_back(rec);
                ++manifest.train_counts_pre_carve[c];
                break;
            default:
                manifest.test.push_back(rec);
                break;
        }
    }
    return manifest;
}

}  // namespace derm::dataset
