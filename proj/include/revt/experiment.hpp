#pragma once

#include <cstdio>
#include <array>
#include <atomic>
#include <functional>
#include <optional>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "revt/augment.hpp"
#include "revt/common.hpp"
#include "revt/ensemble.hpp"
#include "revt/evaldiag.hpp"
#include "revt/nets.hpp"
#include "revt/params.hpp"
#include "revt/reparam.hpp"
#include "revt/synthdata.hpp"
#include "revt/train.hpp"

namespace revt {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Experiment configuration: a flat key = value file with '#' comments.
// ---------------------------------------------------------------------------

struct ModelSlot {
    std::string policy_id = "a1";
    uint64_t decoder_salt = 1;
};

struct ExperimentConfig {
    uint64_t master_seed = 1;
    uint64_t data_seed = 7777;
    std::string out_dir = "runs/default";
    std::string net = "mini_mit";     // mini_mit | conv | linear
    std::string optimizer = "adamw";  // adamw | sgd
    std::vector<ModelSlot> models = {{"a1", 1}, {"a1", 2}, {"a1", 3}};
    int classes = 5;
    int image_size = 64;
    int crop_size = 32;
    int source_n = 250;  // split 0.8 / 0.2 / 0
    int target_n = 100;  // split 0 / 0.5 / 0.5
    int warmstart_iters = 1000;
    int tau_override = -1;
    std::string merge_mode = "encoder_only";
    std::string merge_block;            // empty or a block-mode name
    std::string merge_weights = "uniform";
    int decoder_donor = 1;
    std::vector<int> eval_subset;       // empty = every class
    int sweep_grid = 12;                // grid step 1/12
    int jobs = 2;

    NetConfig net_config() const {
        if (net == "mini_mit") return NetConfig::mini_mit(MiniMiTConfig::desk_default(classes));
        if (net == "conv") {
            ConvConfig c;
            c.classes = classes;
            return NetConfig::conv_net(c);
        }
        if (net == "linear") {
            LinearConfig l;
            l.classes = classes;
            return NetConfig::linear_net(l);
        }
        throw ConfigError("unknown net id: " + net);
    }

    OptimizerSetup optimizer_setup() const { return OptimizerSetup::by_id(optimizer); }

    AugPolicy policy_for(size_t model_index) const {
        return AugPolicy::preset(models.at(model_index).policy_id, image_size, crop_size);
    }

    // seed derivation: everything hangs off the master seed
    uint64_t encoder_seed() const { return mix_seed(master_seed, 0xE5EED); }
    // the warm start stands in for the shared pretrained encoder: seeded from
    // the data seed so every repetition forks from the same weights
    TrainSeeds warmstart_seeds() const {
        return {mix_seed(data_seed, 0x3A57), mix_seed(data_seed, 0xE5EED),
                mix_seed(data_seed, 0x3A58), mix_seed(data_seed, 0x3A59)};
    }
    TrainSeeds model_seeds(size_t model_index) const {
        const uint64_t salt = models.at(model_index).decoder_salt;
        return {mix_seed(master_seed, mix_seed(0xAA00, salt)), encoder_seed(),
                mix_seed(master_seed, mix_seed(0xDD00, salt)),
                mix_seed(master_seed, mix_seed(0x0DE0, salt))};
    }
    uint64_t mixer_seed() const { return mix_seed(master_seed, 0x301C5); }

    std::string canonical_text() const;
    std::string config_hash() const;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw UsageError("cannot open config file: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }
    void validate() const;
};

namespace detail {
inline std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    while (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}
}  // namespace detail

inline ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (kv.count(key))
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " + key);
        kv[key] = val;
    }

    ExperimentConfig c;
    auto take = [&kv](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto take_u64 = [&take](const char* key, uint64_t def) {
        const auto v = take(key);
        return v ? std::stoull(*v) : def;
    };
    auto take_int = [&take](const char* key, int def) {
        const auto v = take(key);
        return v ? std::stoi(*v) : def;
    };
    auto take_str = [&take](const char* key, std::string def) {
        const auto v = take(key);
        return v ? *v : def;
    };

    c.master_seed = take_u64("master_seed", c.master_seed);
    c.data_seed = take_u64("data_seed", c.data_seed);
    c.out_dir = take_str("out_dir", c.out_dir);
    c.net = take_str("net", c.net);
    c.optimizer = take_str("optimizer", c.optimizer);
    if (const auto v = take("models")) {
        c.models.clear();
        for (const std::string& part : detail::split_list(*v)) {
            const size_t colon = part.find(':');
            if (colon == std::string::npos)
                throw ConfigError("models entry needs policy:seed, got " + part);
            ModelSlot slot;
            slot.policy_id = detail::trim(part.substr(0, colon));
            slot.decoder_salt = std::stoull(detail::trim(part.substr(colon + 1)));
            c.models.push_back(slot);
        }
    }
    c.classes = take_int("classes", c.classes);
    c.image_size = take_int("image_size", c.image_size);
    c.crop_size = take_int("crop_size", c.crop_size);
    c.source_n = take_int("source_n", c.source_n);
    c.target_n = take_int("target_n", c.target_n);
    c.warmstart_iters = take_int("warmstart_iters", c.warmstart_iters);
    c.tau_override = take_int("tau_override", c.tau_override);
    c.merge_mode = take_str("merge_mode", c.merge_mode);
    c.merge_block = take_str("merge_block", c.merge_block);
    c.merge_weights = take_str("merge_weights", c.merge_weights);
    c.decoder_donor = take_int("decoder_donor", c.decoder_donor);
    if (const auto v = take("eval_subset")) {
        c.eval_subset.clear();
        for (const std::string& part : detail::split_list(*v))
            if (!part.empty()) c.eval_subset.push_back(std::stoi(part));
    }
    c.sweep_grid = take_int("sweep_grid", c.sweep_grid);
    c.jobs = take_int("jobs", c.jobs);

    if (!kv.empty()) throw ConfigError("unknown config key: " + kv.begin()->first);
    c.validate();
    return c;
}

inline void ExperimentConfig::validate() const {
    if (models.empty()) throw ConfigError("need at least one base model");
    for (const ModelSlot& m : models) (void)AugPolicy::preset(m.policy_id);
    (void)net_config();
    (void)optimizer_setup();
    if (classes < 2 || classes > 64) throw ConfigError("classes out of range");
    if (crop_size < net_config().total_stride())
        throw ConfigError("crop_size below the encoder stride");
    if (crop_size % net_config().total_stride() != 0 ||
        image_size % net_config().total_stride() != 0)
        throw ConfigError("image and crop sizes must divide the encoder stride");
    if (decoder_donor < 1 || decoder_donor > static_cast<int>(models.size()))
        throw ConfigError("decoder_donor out of range");
    if (source_n < 5 || target_n < 2) throw ConfigError("dataset sizes too small");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

inline std::string ExperimentConfig::canonical_text() const {
    std::ostringstream os;
    os << "classes=" << classes << "\ncrop_size=" << crop_size << "\ndata_seed=" << data_seed
       << "\ndecoder_donor=" << decoder_donor << "\neval_subset=";
    for (size_t i = 0; i < eval_subset.size(); ++i) os << (i ? "," : "") << eval_subset[i];
    os << "\nimage_size=" << image_size << "\nmaster_seed=" << master_seed
       << "\nmerge_block=" << merge_block << "\nmerge_mode=" << merge_mode
       << "\nmerge_weights=" << merge_weights << "\nmodels=";
    for (size_t i = 0; i < models.size(); ++i)
        os << (i ? "," : "") << models[i].policy_id << ":" << models[i].decoder_salt;
    os << "\nnet=" << net << "\noptimizer=" << optimizer << "\nsource_n=" << source_n
       << "\nsweep_grid=" << sweep_grid << "\ntarget_n=" << target_n
       << "\ntau_override=" << tau_override << "\nwarmstart_iters=" << warmstart_iters << "\n";
    return os.str();
}

inline std::string ExperimentConfig::config_hash() const {
    const std::string t = canonical_text();
    const uint64_t h = detail::fnv1a64(t.data(), t.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Data bundle: the three desk domains and their splits.
// ---------------------------------------------------------------------------

struct DomainData {
    std::string name;
    std::vector<SegSample> train, dev, test;
};

struct DataBundle {
    std::vector<DomainData> domains;  // [0] source, then targets

    const DomainData& by_name(const std::string& name) const {
        for (const DomainData& d : domains)
            if (d.name == name) return d;
        throw UsageError("no such domain: " + name);
    }
    const std::vector<SegSample>& source_train() const { return domains.at(0).train; }
};

inline DataBundle generate_data(const ExperimentConfig& cfg) {
    DataBundle b;
    const std::array<DomainSpec, 3> specs = {source_domain_spec(cfg.classes, cfg.image_size),
                                             target_photo_spec(cfg.classes, cfg.image_size),
                                             target_tex_spec(cfg.classes, cfg.image_size)};
    for (size_t i = 0; i < specs.size(); ++i) {
        const bool is_source = i == 0;
        const int n = is_source ? cfg.source_n : cfg.target_n;
        const auto samples = gen_domain(specs[i], n, cfg.data_seed);
        const Splits s = split(samples, is_source ? std::array<double, 3>{0.8, 0.2, 0.0}
                                                  : std::array<double, 3>{0.0, 0.5, 0.5});
        b.domains.push_back({specs[i].name, s.train, s.dev, s.test});
    }
    return b;
}

// The shifted target dev split used for merge sweeps and directional checks.
inline const std::vector<SegSample>& primary_target_dev(const DataBundle& b) {
    return b.by_name("target_photo").dev;
}

// ---------------------------------------------------------------------------
// Training orchestration (in memory; file layer below)
// ---------------------------------------------------------------------------

inline ParamTree warmstart_encoder(const ExperimentConfig& cfg, const DataBundle& data,
                                   json* meta_out = nullptr,
                                   std::vector<IterStat>* log_out = nullptr) {
    TrainJob job;
    job.net = cfg.net_config();
    job.policy = AugPolicy::preset("a1", cfg.image_size, cfg.crop_size);
    job.setup = cfg.optimizer_setup();
    job.seeds = cfg.warmstart_seeds();
    job.data = &data.source_train();
    job.override_tau = cfg.warmstart_iters;
    const TrainResult r = train_base_model(job);
    if (meta_out) {
        *meta_out = r.meta;
        (*meta_out)["kind"] = "warmstart";
    }
    if (log_out) *log_out = r.log;
    // only the encoder is donated to the forked base models
    ParamTree enc;
    for (const auto& [path, e] : r.model.params)
        if (e.part == Part::Encoder) enc.put(path, e.tensor, e.part, e.block, e.layer);
    return enc;
}

inline TrainResult train_model(const ExperimentConfig& cfg, const DataBundle& data,
                               size_t model_index, const ParamTree* warm_encoder,
                               const MixerSet* mixers) {
    TrainJob job;
    job.net = cfg.net_config();
    job.policy = cfg.policy_for(model_index);
    job.setup = cfg.optimizer_setup();
    job.seeds = cfg.model_seeds(model_index);
    job.data = &data.source_train();
    job.mixers = mixers;
    if (warm_encoder) job.init_params = warm_encoder->clone();
    job.override_tau = cfg.tau_override;
    TrainResult r = train_base_model(job);
    r.meta["kind"] = "base_model";
    r.meta["model_index"] = model_index + 1;
    return r;
}

// Evaluate a model's mIoU on one sample set (argmax predictions).
inline double eval_miou(const SegModel& model, const std::vector<SegSample>& samples,
                        const std::vector<int>& subset = {}, int batch = 4) {
    if (samples.empty()) throw UsageError("eval: empty sample set");
    const int classes = model.config.classes();
    ConfusionMatrix cm(classes);
    const std::array<float, 3> mean{0.5f, 0.5f, 0.5f}, stddev{0.25f, 0.25f, 0.25f};
    for (size_t at = 0; at < samples.size(); at += static_cast<size_t>(batch)) {
        const size_t hi = std::min(samples.size(), at + static_cast<size_t>(batch));
        std::vector<Tensor> inputs;
        for (size_t i = at; i < hi; ++i) inputs.push_back(normalize(samples[i].image, mean, stddev));
        const Tensor x = stack_batch(inputs);
        const std::vector<uint8_t> pred = argmax_map(forward(model, x));
        const size_t plane = static_cast<size_t>(samples[at].labels.h) * samples[at].labels.w;
        for (size_t i = at; i < hi; ++i) {
            const std::vector<uint8_t> p(pred.begin() + static_cast<long>((i - at) * plane),
                                         pred.begin() + static_cast<long>((i - at + 1) * plane));
            cm.add(p, samples[i].labels.data);
        }
    }
    return miou_from_confusion(cm, subset).miou;
}

// mIoU of an ensemble combiner on one sample set
template <typename CombineFn>
inline double eval_miou_ensemble(CombineFn&& combine, int classes,
                                 const std::vector<SegSample>& samples,
                                 const std::vector<int>& subset = {}, int batch = 4) {
    if (samples.empty()) throw UsageError("eval: empty sample set");
    ConfusionMatrix cm(classes);
    const std::array<float, 3> mean{0.5f, 0.5f, 0.5f}, stddev{0.25f, 0.25f, 0.25f};
    for (size_t at = 0; at < samples.size(); at += static_cast<size_t>(batch)) {
        const size_t hi = std::min(samples.size(), at + static_cast<size_t>(batch));
        std::vector<Tensor> inputs;
        for (size_t i = at; i < hi; ++i) inputs.push_back(normalize(samples[i].image, mean, stddev));
        const Tensor x = stack_batch(inputs);
        const std::vector<uint8_t> pred = argmax_map(combine(x));
        const size_t plane = static_cast<size_t>(samples[at].labels.h) * samples[at].labels.w;
        for (size_t i = at; i < hi; ++i) {
            const std::vector<uint8_t> p(pred.begin() + static_cast<long>((i - at) * plane),
                                         pred.begin() + static_cast<long>((i - at + 1) * plane));
            cm.add(p, samples[i].labels.data);
        }
    }
    return miou_from_confusion(cm, subset).miou;
}

// Run jobs across worker threads, at most `jobs` in flight; each worker gets
// its own tape scope implicitly (thread-local).
inline void parallel_for(int jobs, int count, const std::function<void(int)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// File layout and manifest
// ---------------------------------------------------------------------------

inline fs::path data_file(const fs::path& out_dir, const std::string& domain,
                          const std::string& split) {
    return out_dir / "data" / ("data_" + domain + "_" + split + ".bin");
}
inline fs::path model_file(const fs::path& out_dir, size_t model_index) {
    return out_dir / "checkpoints" / ("model" + std::to_string(model_index + 1) + ".ckpt");
}
inline fs::path warmstart_file(const fs::path& out_dir) {
    return out_dir / "checkpoints" / "warmstart.ckpt";
}
inline fs::path merged_file(const fs::path& out_dir, const std::string& tag) {
    return out_dir / "checkpoints" / ("merged_" + tag + ".ckpt");
}

inline void manifest_record(const fs::path& out_dir, const std::string& rel_path,
                            const std::string& cmd, const std::string& cfg_hash) {
    const fs::path mpath = out_dir / "manifest.json";
    json m;
    if (fs::exists(mpath)) {
        std::ifstream f(mpath);
        try {
            f >> m;
        } catch (const json::exception&) {
            m = json::object();
        }
    }
    m["tool_version"] = kToolVersion;
    m["config_hash"] = cfg_hash;
    if (!m.contains("entries") || !m["entries"].is_object()) m["entries"] = json::object();
    m["entries"][rel_path] = {{"cmd", cmd}, {"config_hash", cfg_hash}};
    std::ofstream f(mpath, std::ios::trunc);
    f << m.dump(2) << "\n";
}

inline void write_csv(const fs::path& out_dir, const std::string& rel_path,
                      const std::string& content, const std::string& cmd,
                      const std::string& cfg_hash) {
    const fs::path full = out_dir / rel_path;
    fs::create_directories(full.parent_path());
    std::ofstream f(full, std::ios::trunc);
    if (!f) throw UsageError("cannot write " + full.string());
    f << content;
    f.close();
    manifest_record(out_dir, rel_path, cmd, cfg_hash);
}

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Subcommand bodies (shared by the CLI and the acceptance suite)
// ---------------------------------------------------------------------------

inline void cmd_gen_data(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    fs::create_directories(out / "data");
    const DataBundle b = generate_data(cfg);
    for (const DomainData& d : b.domains) {
        const struct {
            const char* split;
            const std::vector<SegSample>* samples;
        } rows[] = {{"train", &d.train}, {"dev", &d.dev}, {"test", &d.test}};
        for (const auto& r : rows) {
            if (r.samples->empty()) continue;
            const fs::path p = data_file(out, d.name, r.split);
            write_split_file(p.string(), *r.samples);
            manifest_record(out, fs::relative(p, out).string(), "gen-data", cfg.config_hash());
        }
    }
}

inline DataBundle load_data_files(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    DataBundle b;
    for (const std::string name : {"source", "target_photo", "target_tex"}) {
        DomainData d;
        d.name = name;
        const struct {
            const char* split;
            std::vector<SegSample>* samples;
        } rows[] = {{"train", &d.train}, {"dev", &d.dev}, {"test", &d.test}};
        for (const auto& r : rows) {
            const fs::path p = data_file(out, name, r.split);
            if (fs::exists(p)) *r.samples = read_split_file(p.string(), name);
        }
        b.domains.push_back(std::move(d));
    }
    if (b.source_train().empty())
        throw UsageError("no training data under " + cfg.out_dir + "; run gen-data first");
    return b;
}

inline void write_train_log(const ExperimentConfig& cfg, const std::string& rel,
                            const std::vector<IterStat>& log) {
    std::ostringstream csv;
    csv << "iter,lr,loss\n";
    for (const IterStat& s : log)
        csv << s.iter << "," << fmt_double(s.lr) << "," << fmt_double(s.loss) << "\n";
    write_csv(fs::path(cfg.out_dir), rel, csv.str(), "train", cfg.config_hash());
}

// Train one base model (file layer). The shared warm start is created on
// demand so every model forks from the same encoder state.
inline void cmd_train(const ExperimentConfig& cfg, int model_index_1based) {
    const fs::path out(cfg.out_dir);
    fs::create_directories(out / "checkpoints");
    const DataBundle data = load_data_files(cfg);

    std::optional<ParamTree> warm;
    if (cfg.warmstart_iters > 0) {
        const fs::path wpath = warmstart_file(out);
        if (fs::exists(wpath)) {
            warm = read_checkpoint_file(wpath.string()).tree;
        } else {
            json meta;
            std::vector<IterStat> log;
            warm = warmstart_encoder(cfg, data, &meta, &log);
            meta["config_hash"] = cfg.config_hash();
            write_checkpoint_file(wpath.string(), *warm, meta);
            manifest_record(out, fs::relative(wpath, out).string(), "train", cfg.config_hash());
            write_train_log(cfg, "logs/train_warmstart.csv", log);
        }
    }

    const MixerSet mixers =
        MixerSet::generate(32, cfg.crop_size, cfg.crop_size, cfg.mixer_seed());

    auto run_one = [&](int idx0) {
        TrainResult r = train_model(cfg, data, static_cast<size_t>(idx0),
                                    warm ? &*warm : nullptr, &mixers);
        r.meta["config_hash"] = cfg.config_hash();
        const fs::path mpath = model_file(out, static_cast<size_t>(idx0));
        write_checkpoint_file(mpath.string(), r.model.params, r.meta);
        write_train_log(cfg, "logs/train_model" + std::to_string(idx0 + 1) + ".csv", r.log);
        manifest_record(out, fs::relative(mpath, out).string(), "train", cfg.config_hash());
    };

    if (model_index_1based > 0) {
        if (model_index_1based > static_cast<int>(cfg.models.size()))
            throw UsageError("model index out of range");
        run_one(model_index_1based - 1);
    } else {
        parallel_for(cfg.jobs, static_cast<int>(cfg.models.size()), run_one);
    }
}

inline SegModel load_model_checkpoint(const fs::path& path) {
    const Checkpoint ck = read_checkpoint_file(path.string());
    SegModel m;
    m.config = NetConfig::from_json(ck.meta.at("net"));
    m.params = ck.tree;
    return m;
}

inline std::vector<SegModel> load_base_models(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    std::vector<SegModel> models;
    for (size_t m = 0; m < cfg.models.size(); ++m) {
        const fs::path p = model_file(out, m);
        if (!fs::exists(p))
            throw UsageError("missing checkpoint " + p.string() + "; run train first");
        models.push_back(load_model_checkpoint(p));
    }
    return models;
}

struct MergeOptions {
    std::string mode = "encoder_only";
    std::string block;               // overrides mode when set
    std::string weights = "uniform";
    int donor = 1;
};

inline std::string merge_tag(const MergeOptions& opt) {
    return opt.block.empty() ? opt.mode : "block_" + opt.block;
}

inline fs::path cmd_merge(const ExperimentConfig& cfg, const MergeOptions& opt) {
    const std::vector<SegModel> models = load_base_models(cfg);
    MergeSpec spec;
    for (const SegModel& m : models) spec.checkpoints.push_back(&m.params);
    spec.donor = opt.donor;
    if (opt.weights != "uniform") {
        spec.weights.clear();
        for (const std::string& part : detail::split_list(opt.weights))
            spec.weights.push_back(std::stod(part));
    }
    if (!opt.block.empty())
        spec = block_mode(spec, block_mode_from_string(opt.block));
    else
        spec = part_mode(spec, part_mode_from_string(opt.mode));

    const ParamTree merged = average_params(spec);

    json meta;
    meta["kind"] = "merged";
    meta["net"] = models[0].config.to_json();
    json parents = json::array();
    for (size_t m = 0; m < models.size(); ++m)
        parents.push_back(fs::relative(model_file(cfg.out_dir, m), cfg.out_dir).string());
    meta["parents"] = parents;
    meta["weights"] = spec.effective_weights();
    meta["selector"] = spec.selector.describe();
    meta["mode"] = opt.block.empty() ? opt.mode : "block:" + opt.block;
    meta["donor"] = opt.donor;
    meta["config_hash"] = cfg.config_hash();

    const fs::path out(cfg.out_dir);
    fs::create_directories(out / "checkpoints");
    const fs::path mpath = merged_file(out, merge_tag(opt));
    write_checkpoint_file(mpath.string(), merged, meta);
    manifest_record(out, fs::relative(mpath, out).string(), "merge", cfg.config_hash());
    return mpath;
}

// Per-domain-split evaluation of one checkpoint file: CSV rows
// domain,class,iou plus a per-domain miou row.
inline void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_rel) {
    const fs::path out(cfg.out_dir);
    const fs::path cpath = fs::path(checkpoint_rel).is_absolute()
                               ? fs::path(checkpoint_rel)
                               : out / checkpoint_rel;
    if (!fs::exists(cpath)) throw UsageError("missing checkpoint: " + cpath.string());
    const SegModel model = load_model_checkpoint(cpath);
    const DataBundle data = load_data_files(cfg);

    std::ostringstream csv;
    csv << "domain,split,class,iou\n";
    const std::array<float, 3> mean{0.5f, 0.5f, 0.5f}, stddev{0.25f, 0.25f, 0.25f};
    for (const DomainData& d : data.domains) {
        const struct {
            const char* split;
            const std::vector<SegSample>* samples;
        } rows[] = {{"dev", &d.dev}, {"test", &d.test}};
        for (const auto& r : rows) {
            if (r.samples->empty()) continue;
            ConfusionMatrix cm(model.config.classes());
            for (const SegSample& s : *r.samples) {
                const Tensor x = stack_batch({normalize(s.image, mean, stddev)});
                cm.add(argmax_map(forward(model, x)), s.labels.data);
            }
            const EvalReport rep = miou_from_confusion(cm, cfg.eval_subset);
            for (int c = 0; c < rep.classes; ++c)
                if (rep.class_valid[static_cast<size_t>(c)])
                    csv << d.name << "," << r.split << "," << c << ","
                        << fmt_double(rep.per_class_iou[static_cast<size_t>(c)]) << "\n";
            csv << d.name << "," << r.split << ",miou," << fmt_double(rep.miou) << "\n";
        }
    }
    const std::string stem = cpath.stem().string();
    write_csv(out, "reports/eval_" + stem + ".csv", csv.str(), "eval", cfg.config_hash());
}

inline void cmd_ensemble(const ExperimentConfig& cfg, const std::string& kind) {
    const std::vector<SegModel> models = load_base_models(cfg);
    std::vector<const SegModel*> ptrs;
    for (const SegModel& m : models) ptrs.push_back(&m);
    const DataBundle data = load_data_files(cfg);
    const int classes = models[0].config.classes();

    std::ostringstream csv;
    csv << "domain,split,miou\n";
    for (const DomainData& d : data.domains) {
        const struct {
            const char* split;
            const std::vector<SegSample>* samples;
        } rows[] = {{"dev", &d.dev}, {"test", &d.test}};
        for (const auto& r : rows) {
            if (r.samples->empty()) continue;
            double score = 0.0;
            if (kind == "mean") {
                score = eval_miou_ensemble(
                    [&](const Tensor& x) { return posterior_mean(ptrs, x); }, classes,
                    *r.samples, cfg.eval_subset);
            } else if (kind == "product") {
                score = eval_miou_ensemble(
                    [&](const Tensor& x) { return posterior_product(ptrs, x); }, classes,
                    *r.samples, cfg.eval_subset);
            } else if (kind == "feature") {
                // mean over the associated decoders
                std::vector<double> per_decoder;
                for (size_t dec = 1; dec <= ptrs.size(); ++dec)
                    per_decoder.push_back(eval_miou_ensemble(
                        [&](const Tensor& x) {
                            return encoder_feature_mean(ptrs, x, static_cast<int>(dec));
                        },
                        classes, *r.samples, cfg.eval_subset));
                score = mean_of(per_decoder);
            } else {
                throw UsageError("unknown ensemble kind: " + kind);
            }
            csv << d.name << "," << r.split << "," << fmt_double(score) << "\n";
        }
    }
    write_csv(fs::path(cfg.out_dir), "reports/ensemble_" + kind + ".csv", csv.str(), "ensemble",
              cfg.config_hash());
}

inline void cmd_cosine(const ExperimentConfig& cfg) {
    const std::vector<SegModel> models = load_base_models(cfg);
    std::vector<const ParamTree*> trees;
    for (const SegModel& m : models) trees.push_back(&m.params);

    std::ostringstream csv;
    csv << "layer,cosine\n";
    // gradient-dead parameters (the key-projection bias) stay at exactly
    // zero, where the similarity is undefined
    for (const auto& [path, e] : *trees[0]) {
        Selector one;
        one.path_glob = path;
        try {
            csv << path << "," << fmt_double(cosine_mean(trees, one)) << "\n";
        } catch (const UsageError&) {
            csv << path << ",undefined\n";
        }
    }
    csv << "encoder_mean," << fmt_double(cosine_mean(trees, Selector::encoder())) << "\n";
    csv << "full_mean," << fmt_double(cosine_mean(trees, Selector::all())) << "\n";
    write_csv(fs::path(cfg.out_dir), "reports/cosine.csv", csv.str(), "cosine",
              cfg.config_hash());
}

inline void cmd_sweep(const ExperimentConfig& cfg) {
    const std::vector<SegModel> models = load_base_models(cfg);
    if (models.size() != 3) throw UsageError("sweep needs exactly three base models");
    std::vector<const ParamTree*> trees;
    for (const SegModel& m : models) trees.push_back(&m.params);
    const DataBundle data = load_data_files(cfg);
    const NetConfig net = models[0].config;

    const auto eval_fn = [&](const ParamTree& merged) {
        SegModel m;
        m.config = net;
        m.params = merged.clone();
        return eval_miou(m, primary_target_dev(data), cfg.eval_subset);
    };
    const auto table = sweep_weights(trees, 1.0 / cfg.sweep_grid, Selector::encoder(), eval_fn,
                                     cfg.decoder_donor);

    std::ostringstream csv;
    csv << "alpha,beta,gamma,miou\n";
    for (const SweepEntry& e : table)
        csv << fmt_double(e.weights[0]) << "," << fmt_double(e.weights[1]) << ","
            << fmt_double(e.weights[2]) << "," << fmt_double(e.score) << "\n";
    write_csv(fs::path(cfg.out_dir), "reports/sweep.csv", csv.str(), "sweep", cfg.config_hash());
}

// Summary across base models, the ReVT merge (mean over donor decoders), and
// domain groups. OOD mean covers non-source dev splits; test* mean covers
// target test splits.
inline void cmd_report(const ExperimentConfig& cfg) {
    const std::vector<SegModel> models = load_base_models(cfg);
    const DataBundle data = load_data_files(cfg);
    const size_t m_count = models.size();

    struct SplitRef {
        std::string label;
        const std::vector<SegSample>* samples;
        bool ood_dev;
        bool test_star;
    };
    std::vector<SplitRef> splits;
    for (const DomainData& d : data.domains) {
        if (!d.dev.empty())
            splits.push_back({d.name + "_dev", &d.dev, d.name != "source", false});
        if (!d.test.empty()) splits.push_back({d.name + "_test", &d.test, false, true});
    }

    // base models
    std::vector<std::vector<double>> base_scores(m_count);
    for (size_t m = 0; m < m_count; ++m)
        for (const SplitRef& s : splits)
            base_scores[m].push_back(eval_miou(models[m], *s.samples, cfg.eval_subset));

    // ReVT: averaged encoder, one evaluation per donor decoder
    MergeSpec spec;
    for (const SegModel& m : models) spec.checkpoints.push_back(&m.params);
    std::vector<std::vector<double>> revt_scores(m_count);
    for (size_t donor = 1; donor <= m_count; ++donor) {
        spec.donor = static_cast<int>(donor);
        const SegModel revt = assemble_revt(spec, models[0].config);
        for (const SplitRef& s : splits)
            revt_scores[donor - 1].push_back(eval_miou(revt, *s.samples, cfg.eval_subset));
    }

    auto group_mean = [&](const std::vector<double>& row, bool SplitRef::*flag) {
        std::vector<double> vals;
        for (size_t i = 0; i < splits.size(); ++i)
            if (splits[i].*flag) vals.push_back(row[i]);
        return vals.empty() ? 0.0 : mean_of(vals);
    };

    std::ostringstream csv;
    csv << "entry,split,miou\n";
    json summary;
    summary["tool_version"] = kToolVersion;
    summary["config_hash"] = cfg.config_hash();
    summary["conventions"] = {
        {"encoder_feature_reduction", "mean_over_decoders"},
        {"revt_reduction", "mean_over_donor_decoders"},
        {"std", "population"}};

    auto emit = [&](const std::string& entry, const std::vector<double>& row) {
        json jrow;
        for (size_t i = 0; i < splits.size(); ++i) {
            csv << entry << "," << splits[i].label << "," << fmt_double(row[i]) << "\n";
            jrow[splits[i].label] = row[i];
        }
        const double ood = group_mean(row, &SplitRef::ood_dev);
        const double test_star = group_mean(row, &SplitRef::test_star);
        csv << entry << ",ood_mean," << fmt_double(ood) << "\n";
        csv << entry << ",test_star_mean," << fmt_double(test_star) << "\n";
        jrow["ood_mean"] = ood;
        jrow["test_star_mean"] = test_star;
        summary["entries"][entry] = jrow;
    };

    for (size_t m = 0; m < m_count; ++m)
        emit("base_model" + std::to_string(m + 1) + "_" + cfg.models[m].policy_id,
             base_scores[m]);
    for (size_t d = 0; d < m_count; ++d)
        emit("revt_donor" + std::to_string(d + 1), revt_scores[d]);

    // across-model aggregates: mean +- std per split
    auto across = [&](const std::vector<std::vector<double>>& rows, const std::string& name) {
        std::vector<double> mu_row, sd_row;
        for (size_t i = 0; i < splits.size(); ++i) {
            std::vector<double> col;
            for (const auto& r : rows) col.push_back(r[i]);
            mu_row.push_back(mean_of(col));
            sd_row.push_back(stddev_of(col));
        }
        for (size_t i = 0; i < splits.size(); ++i) {
            csv << name << "_mean," << splits[i].label << "," << fmt_double(mu_row[i]) << "\n";
            csv << name << "_std," << splits[i].label << "," << fmt_double(sd_row[i]) << "\n";
            summary["groups"][name][splits[i].label] = {{"mean", mu_row[i]},
                                                        {"std", sd_row[i]}};
        }
        const double ood = group_mean(mu_row, &SplitRef::ood_dev);
        const double test_star = group_mean(mu_row, &SplitRef::test_star);
        csv << name << "_mean,ood_mean," << fmt_double(ood) << "\n";
        csv << name << "_mean,test_star_mean," << fmt_double(test_star) << "\n";
        summary["groups"][name]["ood_mean"] = ood;
        summary["groups"][name]["test_star_mean"] = test_star;
    };
    across(base_scores, "baseline");
    across(revt_scores, "revt");

    write_csv(fs::path(cfg.out_dir), "reports/summary.csv", csv.str(), "report",
              cfg.config_hash());
    write_csv(fs::path(cfg.out_dir), "reports/summary.json", summary.dump(2) + "\n", "report",
              cfg.config_hash());
}

// gen-data -> train x M -> merge -> eval(merged) -> report
inline void run_full_pipeline(const ExperimentConfig& cfg) {
    cmd_gen_data(cfg);
    cmd_train(cfg, 0);
    MergeOptions opt;
    opt.mode = cfg.merge_mode;
    opt.block = cfg.merge_block;
    opt.weights = cfg.merge_weights;
    opt.donor = cfg.decoder_donor;
    const fs::path merged = cmd_merge(cfg, opt);
    cmd_eval(cfg, fs::relative(merged, cfg.out_dir).string());
    cmd_report(cfg);
}

}  // namespace revt
