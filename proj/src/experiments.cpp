#include "dtn/experiments.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dtn/errors.hpp"

namespace dtn::exp {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

train::TrainingConfig with_ablation(const train::TrainingConfig& base,
                                    std::set<train::Ablation> flags) {
    train::TrainingConfig c = base;
    c.ablation = std::move(flags);
    c.task = flags.count(train::Ablation::BASELINE) ? train::Task::BASELINE : train::Task::DTN;
    return c;
}

fs::path make_run_dir(const fs::path& out_dir, const train::TrainingConfig& c,
                      std::string* run_id_out) {
    const std::string id = make_run_id(c.to_config());
    if (run_id_out) *run_id_out = id;
    return out_dir / id;
}

}  // namespace

std::string make_run_id(const cfg::Config& c) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
    return std::string(buf) + "-" + cfg::config_hash(c);
}

std::string build_version() {
#ifdef DTN_BUILD_VERSION
    return DTN_BUILD_VERSION;
#else
    return "dev";
#endif
}

void ExperimentManifest::save(const fs::path& file) const {
    for (const auto& p : metrics)
        if (!fs::exists(p)) throw UsageError("manifest references missing metrics file " + p);
    for (const auto& p : artifacts)
        if (!fs::exists(p)) throw UsageError("manifest references missing artifact " + p);
    json j;
    j["run_id"] = run_id;
    j["build_version"] = build_version;
    j["config"] = json::object();
    for (const auto& [k, v] : config.values) j["config"][k] = v;
    j["metrics"] = metrics;
    j["artifacts"] = artifacts;
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write manifest " + file.string());
    out << j.dump(2) << "\n";
}

ExperimentManifest ExperimentManifest::load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw CorruptionError("cannot open manifest " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw CorruptionError("malformed manifest " + file.string() + ": " + e.what());
    }
    ExperimentManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.build_version = j.value("build_version", "");
    for (const auto& [k, v] : j.at("config").items()) m.config.values[k] = v.get<std::string>();
    m.metrics = j.value("metrics", std::vector<std::string>{});
    m.artifacts = j.value("artifacts", std::vector<std::string>{});
    return m;
}

data::DatasetSplit prepare_source(const data::DatasetSplit& s, const train::TrainingConfig& c) {
    data::DatasetSplit out = s;
    if (c.desk_scale_n && *c.desk_scale_n < out.size())
        out = out.subsample(*c.desk_scale_n, c.seed);
    if (c.omission.omit_from_s) out = data::apply_omission(out, *c.omission.omit_from_s);
    return out;
}

data::DatasetSplit prepare_target(const data::DatasetSplit& t, const train::TrainingConfig& c) {
    if (!c.omission.omit_from_t) return t;
    return data::apply_omission(t, *c.omission.omit_from_t);
}

fs::path latest_checkpoint(const fs::path& run_dir) {
    const fs::path link = run_dir / "latest";
    if (!fs::exists(link))
        throw UsageError("no checkpoint under " + run_dir.string() + " (missing 'latest')");
    return fs::canonical(link);
}

eval::TransferFn load_transfer(const fs::path& run_dir, net::FeatureNetwork& f) {
    const fs::path dir = latest_checkpoint(run_dir);
    if (fs::exists(dir / "g.bin")) {
        auto g = std::make_shared<net::GeneratorHead>(0, 1);
        // Channel count is recoverable from the blob only by trying; start
        // with 1, fall back to 3.
        try {
            train::load_network(dir, "g", g->tensors());
        } catch (const CorruptionError&) {
            g = std::make_shared<net::GeneratorHead>(0, 3);
            train::load_network(dir, "g", g->tensors());
        }
        net::FeatureNetwork* fp = &f;
        return [g, fp](const nn::MatF& x) { return g->generate(fp->features(x, false), false); };
    }
    if (fs::exists(dir / "g_nof.bin")) {
        auto g = std::make_shared<net::BaselineGenerator>(0, 1);
        try {
            train::load_network(dir, "g_nof", g->tensors());
        } catch (const CorruptionError&) {
            g = std::make_shared<net::BaselineGenerator>(0, 3);
            train::load_network(dir, "g_nof", g->tensors());
        }
        return [g](const nn::MatF& x) { return g->generate(x, false); };
    }
    if (fs::exists(dir / "baseline_g.bin")) {
        auto g = std::make_shared<net::BaselineGenerator>(0, 1);
        try {
            train::load_network(dir, "baseline_g", g->tensors());
        } catch (const CorruptionError&) {
            g = std::make_shared<net::BaselineGenerator>(0, 3);
            train::load_network(dir, "baseline_g", g->tensors());
        }
        return [g](const nn::MatF& x) { return g->generate(x, false); };
    }
    throw UsageError("no generator checkpoint in " + dir.string());
}

nn::MatF collapse_to_gray(const nn::MatF& batch, const nn::TensorShape& shape) {
    if (shape.c == 1) return batch;
    if (shape.c != 3) throw UsageError("collapse_to_gray: expected 1 or 3 channels");
    const int hw = shape.h * shape.w;
    nn::MatF out = (batch.topRows(hw) + batch.middleRows(hw, hw) + batch.bottomRows(hw)) / 3.0f;
    return out;
}

std::vector<SuiteRow> run_ablation_suite(const data::DatasetSplit& s, const data::DatasetSplit& t,
                                         const data::DatasetSplit& s_test,
                                         net::FeatureNetwork& f, net::EvalClassifier& eval_clf,
                                         const train::TrainingConfig& base_config,
                                         const fs::path& out_dir) {
    using train::Ablation;
    struct Variant {
        std::string name;
        std::set<Ablation> flags;
    };
    const std::vector<Variant> variants = {
        {"dtn", {}},
        {"no_tid", {Ablation::NO_TID}},
        {"no_const", {Ablation::NO_CONST}},
        {"no_f_in_g", {Ablation::NO_F_IN_G}},
        {"no_gan", {Ablation::NO_GAN}},
        {"no_const_no_tid", {Ablation::NO_CONST, Ablation::NO_TID}},
        {"baseline", {Ablation::BASELINE}},
    };
    const data::DatasetSplit s_prep = prepare_source(s, base_config);
    const data::DatasetSplit t_prep = prepare_target(t, base_config);
    std::vector<SuiteRow> rows;

    for (const auto& v : variants) {
        SuiteRow row;
        row.name = v.name;
        try {
            train::TrainingConfig c = with_ablation(base_config, v.flags);
            const fs::path run_dir = make_run_dir(out_dir, c, &row.run_id);
            eval::TransferFn transfer;
            if (v.flags.count(Ablation::BASELINE)) {
                auto r = train::train_baseline(s_prep, t_prep, f, c, run_dir);
                if (r.diverged) throw std::runtime_error("diverged at step " +
                                                         std::to_string(r.steps_completed));
                auto g = std::shared_ptr<net::BaselineGenerator>(std::move(r.generator));
                transfer = [g](const nn::MatF& x) { return g->generate(x, false); };
            } else {
                auto r = train::train_dtn(s_prep, t_prep, f, c, run_dir);
                if (r.diverged) throw std::runtime_error("diverged at step " +
                                                         std::to_string(r.steps_completed));
                if (v.flags.count(Ablation::NO_F_IN_G)) {
                    auto g = std::shared_ptr<net::BaselineGenerator>(std::move(r.no_f_generator));
                    transfer = [g](const nn::MatF& x) { return g->generate(x, false); };
                } else {
                    auto g = std::shared_ptr<net::GeneratorHead>(std::move(r.g));
                    net::FeatureNetwork* fp = &f;
                    transfer = [g, fp](const nn::MatF& x) {
                        return g->generate(fp->features(x, false), false);
                    };
                }
            }
            const fs::path report_file = out_dir / (v.name + "_metrics.txt");
            eval::MetricsReport rep =
                eval::transferred_accuracy(transfer, eval_clf, s_test, v.name, c.hash());
            rep.save(report_file);
            row.accuracy = rep.accuracy();
            ExperimentManifest m;
            m.run_id = row.run_id;
            m.config = c.to_config();
            m.build_version = build_version();
            m.metrics.push_back(report_file.string());
            m.save(out_dir / row.run_id / "manifest");
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(row);
    }

    // Control: the evaluation classifier applied to the untransferred
    // source images (channel-collapsed to grayscale).
    SuiteRow raw;
    raw.name = "raw";
    try {
        const nn::TensorShape shape = s_test.shape();
        eval::TransferFn ident = [shape](const nn::MatF& x) {
            return collapse_to_gray(x, shape);
        };
        eval::MetricsReport rep =
            eval::transferred_accuracy(ident, eval_clf, s_test, "raw", base_config.hash());
        rep.save(out_dir / "raw_metrics.txt");
        raw.accuracy = rep.accuracy();
    } catch (const std::exception& e) {
        raw.error = e.what();
    }
    rows.push_back(raw);
    write_suite_table(rows, out_dir / "ablation_table.txt");
    return rows;
}

void write_suite_table(const std::vector<SuiteRow>& rows, const fs::path& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    for (const auto& r : rows) {
        if (r.error.empty())
            out << r.name << "\taccuracy=" << r.accuracy << "\trun_id=" << r.run_id << "\n";
        else
            out << r.name << "\tFAILED\t" << r.error << "\n";
    }
}

std::vector<SuiteRow> read_suite_table(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw CorruptionError("cannot open " + file.string());
    std::vector<SuiteRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        SuiteRow r;
        std::string field;
        std::getline(ss, r.name, '\t');
        std::getline(ss, field, '\t');
        if (field == "FAILED") {
            std::getline(ss, r.error);
        } else if (field.rfind("accuracy=", 0) == 0) {
            r.accuracy = std::stod(field.substr(9));
            if (std::getline(ss, field, '\t') && field.rfind("run_id=", 0) == 0)
                r.run_id = field.substr(7);
        } else {
            throw CorruptionError("malformed suite table line: " + line);
        }
        rows.push_back(r);
    }
    return rows;
}

std::vector<UnseenDigitRow> run_unseen_digit_suite(
    const data::DatasetSplit& s, const data::DatasetSplit& t, const data::DatasetSplit& s_test,
    const data::DatasetSplit& f_train, net::FeatureNetwork& f, net::EvalClassifier& eval_clf,
    const train::TrainingConfig& base_config, int digit, const fs::path& out_dir) {
    struct Variant {
        std::string name;
        bool from_s, from_t, from_f;
    };
    const std::vector<Variant> variants = {
        {"omit_s", true, false, false},
        {"omit_t", false, true, false},
        {"omit_both", true, true, false},
        {"omit_all", true, true, true},
    };
    std::vector<UnseenDigitRow> rows;
    for (const auto& v : variants) {
        UnseenDigitRow row;
        row.name = v.name;
        try {
            train::TrainingConfig c = base_config;
            c.task = train::Task::DTN;
            c.omission = {};
            if (v.from_s) c.omission.omit_from_s = digit;
            if (v.from_t) c.omission.omit_from_t = digit;
            if (v.from_f) c.omission.omit_from_f_training = digit;
            const fs::path run_dir = make_run_dir(out_dir, c, &row.run_id);

            net::FeatureNetwork* f_used = &f;
            std::unique_ptr<net::FeatureNetwork> f_filtered;
            if (v.from_f) {
                data::DatasetSplit f_split = data::apply_omission(f_train, digit);
                train::TrainingConfig fc = base_config;
                fc.task = train::Task::F;
                fc.omission = c.omission;
                fc.learning_rate = 1e-3f;
                fc.adam_beta1 = 0.9f;
                auto r = train::train_classifier(f_split, fc, run_dir / "f_filtered");
                f_filtered = std::move(r.net);
                f_used = f_filtered.get();
            }

            auto result = train::train_dtn(prepare_source(s, c), prepare_target(t, c), *f_used,
                                           c, run_dir);
            if (result.diverged)
                throw std::runtime_error("diverged at step " +
                                         std::to_string(result.steps_completed));
            auto g = std::shared_ptr<net::GeneratorHead>(std::move(result.g));
            net::FeatureNetwork* fp = f_used;
            // The transfer closure must not outlive f_filtered; keep it alive.
            auto f_keep = std::shared_ptr<net::FeatureNetwork>(std::move(f_filtered));
            eval::TransferFn transfer = [g, fp, f_keep](const nn::MatF& x) {
                return g->generate(fp->features(x, false), false);
            };
            row.report = eval::transferred_accuracy(transfer, eval_clf, s_test, v.name, c.hash());
            row.report.save(out_dir / (v.name + "_metrics.txt"));
            ExperimentManifest m;
            m.run_id = row.run_id;
            m.config = c.to_config();
            m.build_version = build_version();
            m.metrics.push_back((out_dir / (v.name + "_metrics.txt")).string());
            m.save(run_dir / "manifest");
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace dtn::exp
