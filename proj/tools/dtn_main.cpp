// Command-line experiment driver: dataset fetching, network training,
// ablation suites, evaluation, and image transfer.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtn/experiments.hpp"
#include "dtn/png_io.hpp"

using namespace dtn;
namespace fs = std::filesystem;
using nn::MatF;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "runs";
    std::string data_dir;
    std::optional<uint64_t> seed;
    bool dry_run = false;
};

fs::path resolve_data_dir(const GlobalArgs& g) {
    if (!g.data_dir.empty()) return g.data_dir;
    if (const char* env = std::getenv("DTN_DATA_DIR"); env && *env) return env;
    if (const char* home = std::getenv("HOME"); home && *home)
        return fs::path(home) / ".cache" / "dtn";
    return fs::path(".") / "dtn-cache";
}

train::TrainingConfig load_training_config(const GlobalArgs& g) {
    if (g.config_path.empty()) throw UsageError("--config is required for this command");
    auto c = cfg::load_config(g.config_path);
    auto t = train::TrainingConfig::from_config(c);
    if (g.seed) t.seed = *g.seed;
    return t;
}

data::FetchOptions fetch_options(const GlobalArgs& g) {
    data::FetchOptions opt;
    opt.cache_dir = resolve_data_dir(g);
    if (const char* env = std::getenv("DTN_SVHN_BASE_URL"); env && *env)
        opt.svhn_base_url = env;
    if (const char* env = std::getenv("DTN_MNIST_BASE_URL"); env && *env)
        opt.mnist_base_url = env;
    return opt;
}

// Loads f (or the evaluation classifier, same architecture) from a run
// directory or a specific step directory.
std::unique_ptr<net::FeatureNetwork> load_feature_network(const fs::path& path) {
    fs::path dir = path;
    if (!fs::exists(dir / "f.bin")) dir = exp::latest_checkpoint(path);
    if (!fs::exists(dir / "f.bin"))
        throw UsageError("no classifier checkpoint (f.bin) under " + path.string());
    auto net = std::make_unique<net::FeatureNetwork>(0);
    train::load_network(dir, "f", net->tensors());
    return net;
}

std::unique_ptr<net::EvalClassifier> load_eval_classifier(const fs::path& path) {
    fs::path dir = path;
    if (!fs::exists(dir / "f.bin")) dir = exp::latest_checkpoint(path);
    auto clf = std::make_unique<net::EvalClassifier>(0);
    train::load_network(dir, "f", clf->tensors());
    return clf;
}

void list_run_artifacts(const fs::path& run_dir, exp::ExperimentManifest& m) {
    if (fs::exists(run_dir / "loss_log.txt"))
        m.artifacts.push_back((run_dir / "loss_log.txt").string());
    for (const auto& e : fs::directory_iterator(run_dir))
        if (e.is_directory() && e.path().filename().string().rfind("step_", 0) == 0)
            m.artifacts.push_back(e.path().string());
}

int cmd_fetch(const GlobalArgs& g, const std::string& dataset, const std::string& split) {
    const auto opt = fetch_options(g);
    data::FetchResult r;
    if (dataset == "svhn" && split == "extra")
        r = data::fetch_svhn(data::SvhnSplit::EXTRA, opt);
    else if (dataset == "svhn" && split == "test")
        r = data::fetch_svhn(data::SvhnSplit::TEST, opt);
    else if (dataset == "mnist" && split == "train")
        r = data::fetch_mnist(data::MnistSplit::TRAIN, opt);
    else if (dataset == "mnist" && split == "test")
        r = data::fetch_mnist(data::MnistSplit::TEST, opt);
    else
        throw UsageError("unknown dataset/split '" + dataset + " " + split +
                         "' (expected: svhn {extra|test} or mnist {train|test})");
    std::cout << dataset << " " << split << ": " << r.split.size() << " images, sha256 "
              << r.split.source_checksum() << (r.from_cache ? " (cached)" : " (downloaded)")
              << "\n";
    return 0;
}

// Loads the splits a training task needs, honoring the configured
// direction: S_TO_T reads SVHN as source and MNIST as target.
struct TaskData {
    data::DatasetSplit s, t;
};

TaskData load_transfer_splits(const GlobalArgs& g, const train::TrainingConfig& c) {
    const auto opt = fetch_options(g);
    TaskData d;
    if (c.direction == train::Direction::S_TO_T) {
        d.s = data::fetch_svhn(data::SvhnSplit::EXTRA, opt).split;
        d.t = data::fetch_mnist(data::MnistSplit::TRAIN, opt).split;
    } else {
        d.s = data::fetch_mnist(data::MnistSplit::TRAIN, opt).split;
        d.t = data::fetch_svhn(data::SvhnSplit::EXTRA, opt).split;
    }
    return d;
}

int cmd_train(const GlobalArgs& g) {
    auto c = load_training_config(g);
    const std::string run_id = exp::make_run_id(c.to_config());
    if (g.dry_run) {
        std::cout << "config ok, task would run as " << run_id << "\n";
        return 0;
    }
    const fs::path run_dir = fs::path(g.out_dir) / run_id;
    const auto opt = fetch_options(g);

    exp::ExperimentManifest m;
    m.run_id = run_id;
    m.config = c.to_config();
    m.build_version = exp::build_version();

    if (c.task == train::Task::F || c.task == train::Task::EVAL_CLASSIFIER) {
        data::DatasetSplit split =
            c.task == train::Task::F ? data::fetch_svhn(data::SvhnSplit::EXTRA, opt).split
                                     : data::fetch_mnist(data::MnistSplit::TRAIN, opt).split;
        if (c.desk_scale_n && *c.desk_scale_n < split.size())
            split = split.subsample(*c.desk_scale_n, c.seed);
        if (c.omission.omit_from_f_training)
            split = data::apply_omission(split, *c.omission.omit_from_f_training);
        auto result = train::train_classifier(split, c, run_dir);
        std::cout << "final training loss " << result.final_loss << "\n";

        // Score both test sets and record the reports in the manifest.
        net::FeatureNetwork& net = *result.net;
        eval::TransferFn identity = [](const MatF& x) { return x; };
        auto clf = std::make_unique<net::EvalClassifier>(0);
        {
            // Same architecture: copy the trained parameters across.
            auto src = net.tensors();
            auto dst = clf->tensors();
            for (size_t i = 0; i < src.size(); ++i) *dst[i].value = *src[i].value;
        }
        for (const auto& [dsname, split_v] :
             {std::pair{std::string("svhn-test"),
                        data::fetch_svhn(data::SvhnSplit::TEST, opt).split},
              std::pair{std::string("mnist-test"),
                        data::fetch_mnist(data::MnistSplit::TEST, opt).split}}) {
            auto rep = eval::transferred_accuracy(identity, *clf, split_v, dsname, c.hash());
            const fs::path file = run_dir / (dsname + "_metrics.txt");
            rep.save(file);
            m.metrics.push_back(file.string());
            std::cout << dsname << " accuracy " << rep.accuracy() << "\n";
        }
    } else if (c.task == train::Task::DTN || c.task == train::Task::BASELINE) {
        if (c.f_checkpoint.empty())
            throw UsageError("config: train.f_checkpoint is required for transfer training");
        auto f = load_feature_network(c.f_checkpoint);
        auto splits = load_transfer_splits(g, c);
        const auto s = exp::prepare_source(splits.s, c);
        const auto t = exp::prepare_target(splits.t, c);
        if (c.task == train::Task::BASELINE || c.ablation.count(train::Ablation::BASELINE)) {
            auto r = train::train_baseline(s, t, *f, c, run_dir);
            std::cout << (r.diverged ? "diverged after " : "completed ") << r.steps_completed
                      << " steps\n";
            if (r.diverged) return 1;
        } else {
            auto r = train::train_dtn(s, t, *f, c, run_dir);
            std::cout << (r.diverged ? "diverged after " : "completed ") << r.steps_completed
                      << " steps\n";
            if (r.diverged) return 1;
        }
    }
    list_run_artifacts(run_dir, m);
    m.save(run_dir / "manifest");
    std::cout << "run " << run_id << " written to " << run_dir.string() << "\n";
    return 0;
}

int cmd_ablate(const GlobalArgs& g, const std::string& eval_classifier) {
    auto c = load_training_config(g);
    if (g.dry_run) {
        std::cout << "config ok, 8-row suite would run\n";
        return 0;
    }
    if (c.f_checkpoint.empty())
        throw UsageError("config: train.f_checkpoint is required for the ablation suite");
    if (eval_classifier.empty())
        throw UsageError("--eval-classifier is required for the ablation suite");
    auto f = load_feature_network(c.f_checkpoint);
    auto clf = load_eval_classifier(eval_classifier);
    const auto opt = fetch_options(g);
    auto splits = load_transfer_splits(g, c);
    auto s_test = data::fetch_svhn(data::SvhnSplit::TEST, opt).split;
    const fs::path out_dir = fs::path(g.out_dir) / ("ablation-" + exp::make_run_id(c.to_config()));
    fs::create_directories(out_dir);
    auto rows = exp::run_ablation_suite(splits.s, splits.t, s_test, *f, *clf, c, out_dir);
    for (const auto& r : rows) {
        if (r.error.empty())
            std::cout << r.name << " " << r.accuracy << "\n";
        else
            std::cout << r.name << " FAILED " << r.error << "\n";
    }
    std::cout << "table written to " << (out_dir / "ablation_table.txt").string() << "\n";
    return 0;
}

eval::TransferFn replicate_if_gray(eval::TransferFn inner, const nn::TensorShape& in_shape) {
    return [inner, in_shape](const MatF& x) {
        return inner(in_shape.c == 1 ? data::replicate_channels(x, in_shape) : x);
    };
}

int cmd_eval(const GlobalArgs& g, const std::string& run_dir_arg, const std::string& suite,
             const std::string& eval_classifier, int query_count, int unseen_digit) {
    const fs::path run_dir = run_dir_arg;
    const fs::path eval_dir = run_dir / "eval";
    const auto opt = fetch_options(g);

    if (suite == "accuracy" || suite == "per-class" || suite == "adapt-nn" || suite == "basis" ||
        suite == "reverse") {
        const auto m = exp::ExperimentManifest::load(run_dir / "manifest");
        auto run_cfg = train::TrainingConfig::from_config(m.config);
        if (suite == "basis") {
            fs::create_directories(eval_dir);
            const fs::path step = exp::latest_checkpoint(run_dir);
            if (!fs::exists(step / "g.bin"))
                throw UsageError("basis visualization needs a feature-driven generator (g.bin)");
            net::GeneratorHead gen(0, run_cfg.direction == train::Direction::S_TO_T ? 1 : 3);
            train::load_network(step, "g", gen.tensors());
            auto grid = eval::basis_visualization(gen, net::kFeatureDim);
            const fs::path file = eval_dir / "basis.png";
            eval::save_grid_png(grid, file);
            std::cout << "basis grid (" << grid.grid_cols << "x" << grid.grid_rows
                      << " tiles) written to " << file.string() << "\n"
                      << "mode diversity " << eval::mode_diversity_score(grid) << "\n";
            return 0;
        }

        if (run_cfg.f_checkpoint.empty())
            throw UsageError("run manifest lacks train.f_checkpoint; cannot rebuild transfer");
        auto f = load_feature_network(run_cfg.f_checkpoint);
        auto raw_transfer = exp::load_transfer(run_dir, *f);
        fs::create_directories(eval_dir);

        if (suite == "reverse") {
            // Appendix-style grid: grayscale digits in odd columns, their
            // three-channel transfers in even columns.
            auto t_test = data::fetch_mnist(data::MnistSplit::TEST, opt).split;
            auto transfer = replicate_if_gray(raw_transfer, t_test.shape());
            const int n = std::min<int>(8, int(t_test.size()));
            std::vector<int> idx(n);
            for (int i = 0; i < n; ++i) idx[i] = i;
            const MatF in = t_test.batch(idx);
            const MatF out = transfer(in);
            eval::ImageGrid grid;
            grid.tile_shape = {3, 32, 32};
            grid.tiles.resize(3 * 32 * 32, 2 * n);
            for (int i = 0; i < n; ++i) {
                grid.tiles.col(2 * i) = data::replicate_channels(MatF(in.col(i)), {1, 32, 32});
                grid.tiles.col(2 * i + 1) = out.col(i);
            }
            grid.grid_cols = 2 * n;
            grid.grid_rows = 1;
            const fs::path file = eval_dir / "reverse_grid.png";
            eval::save_grid_png(grid, file);
            std::cout << "reverse grid written to " << file.string() << "\n";
            return 0;
        }

        if (eval_classifier.empty())
            throw UsageError("--eval-classifier is required for suite " + suite);
        auto clf = load_eval_classifier(eval_classifier);
        auto s_test = data::fetch_svhn(data::SvhnSplit::TEST, opt).split;

        if (suite == "accuracy" || suite == "per-class") {
            auto rep = eval::transferred_accuracy(raw_transfer, *clf, s_test, suite,
                                                  run_cfg.hash());
            const fs::path file = eval_dir / (suite + "_metrics.txt");
            rep.save(file);
            std::cout << "accuracy " << rep.accuracy() << "\n";
            if (suite == "per-class")
                for (const auto& [digit, count] : rep.per_class_count)
                    std::cout << "digit " << digit << " accuracy " << rep.class_accuracy(digit)
                              << " (" << count << " samples)\n";
            std::cout << "report written to " << file.string() << "\n";
            return 0;
        }

        // adapt-nn: nearest-neighbor digit classification of MNIST test
        // queries against a gallery of transferred source images, compared
        // with the raw-pixel gallery control.
        auto queries = data::fetch_mnist(data::MnistSplit::TEST, opt).split;
        if (query_count > 0 && size_t(query_count) < queries.size())
            queries = queries.subsample(size_t(query_count), run_cfg.seed);
        const size_t gallery_n = std::min<size_t>(s_test.size(), 5000);
        auto gallery_split = s_test.subsample(gallery_n, run_cfg.seed + 1);
        std::vector<int> idx(gallery_split.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
        const MatF gallery_raw_rgb = gallery_split.batch(idx);
        // Transfer in chunks: generator activations for thousands of
        // images at once would not fit in memory.
        MatF gallery_transferred;
        for (Eigen::Index start = 0; start < gallery_raw_rgb.cols(); start += 256) {
            const Eigen::Index take = std::min<Eigen::Index>(256, gallery_raw_rgb.cols() - start);
            const MatF out = raw_transfer(gallery_raw_rgb.middleCols(start, take));
            if (gallery_transferred.rows() == 0)
                gallery_transferred.resize(out.rows(), gallery_raw_rgb.cols());
            gallery_transferred.middleCols(start, take) = out;
        }
        const MatF gallery_raw = exp::collapse_to_gray(gallery_raw_rgb, gallery_split.shape());
        auto rep_t = eval::domain_adapt_nn(gallery_transferred, gallery_split.batch_labels(idx),
                                           queries, "adapt-nn-transferred", run_cfg.hash());
        auto rep_r = eval::domain_adapt_nn(gallery_raw, gallery_split.batch_labels(idx), queries,
                                           "adapt-nn-raw", run_cfg.hash());
        rep_t.save(eval_dir / "adapt_nn_transferred.txt");
        rep_r.save(eval_dir / "adapt_nn_raw.txt");
        std::cout << "transferred gallery accuracy " << rep_t.accuracy() << "\n"
                  << "raw pixel gallery accuracy " << rep_r.accuracy() << "\n";
        return 0;
    }

    if (suite == "unseen") {
        // Trains the four omission variants from the base config.
        auto c = load_training_config(g);
        if (c.f_checkpoint.empty() || eval_classifier.empty())
            throw UsageError("unseen suite needs train.f_checkpoint and --eval-classifier");
        auto f = load_feature_network(c.f_checkpoint);
        auto clf = load_eval_classifier(eval_classifier);
        auto splits = load_transfer_splits(g, c);
        auto s_test = data::fetch_svhn(data::SvhnSplit::TEST, opt).split;
        fs::create_directories(eval_dir);
        auto rows = exp::run_unseen_digit_suite(splits.s, splits.t, s_test, splits.s, *f, *clf,
                                                c, unseen_digit, eval_dir);
        for (const auto& r : rows) {
            if (!r.error.empty()) {
                std::cout << r.name << " FAILED " << r.error << "\n";
                continue;
            }
            std::cout << r.name << " digit-" << unseen_digit << " accuracy "
                      << r.report.class_accuracy(unseen_digit) << "\n";
        }
        return 0;
    }

    throw UsageError("unknown suite '" + suite +
                     "' (valid: accuracy, per-class, adapt-nn, unseen, basis, reverse)");
}

int cmd_transfer(const GlobalArgs& g, const std::string& run_dir_arg,
                 const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw UsageError("transfer: at least one input image is required");
    const fs::path run_dir = run_dir_arg;
    const auto m = exp::ExperimentManifest::load(run_dir / "manifest");
    auto run_cfg = train::TrainingConfig::from_config(m.config);
    if (run_cfg.f_checkpoint.empty())
        throw UsageError("run manifest lacks train.f_checkpoint; cannot rebuild transfer");
    auto f = load_feature_network(run_cfg.f_checkpoint);
    auto transfer = exp::load_transfer(run_dir, *f);
    const fs::path out_dir = fs::path(g.out_dir);
    fs::create_directories(out_dir);

    std::vector<MatF> ins, outs;
    std::vector<std::string> names;
    for (const auto& path : inputs) {
        try {
            const png::Image img = png::read(path);
            // Bring any decodable PNG onto the 32x32 canvas per channel.
            const int ch = img.channels;
            MatF x(ch * 32 * 32, 1);
            std::vector<float> plane(size_t(img.width) * img.height), resized(32 * 32);
            for (int c = 0; c < ch; ++c) {
                for (int i = 0; i < img.height * img.width; ++i)
                    plane[i] = data::to_unit_range(img.pixels[size_t(i) * ch + c]);
                data::resize_bilinear(plane.data(), img.height, img.width, resized.data(), 32,
                                      32);
                for (int k = 0; k < 32 * 32; ++k) x(c * 1024 + k, 0) = resized[k];
            }
            MatF x3 = ch == 1 ? data::replicate_channels(x, {1, 32, 32}) : x;
            const MatF y = transfer(x3);
            ins.push_back(x3);
            outs.push_back(y);
            names.push_back(fs::path(path).stem().string());
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
        }
    }
    if (outs.empty()) {
        std::cerr << "error: no input could be transferred\n";
        return 1;
    }

    const int out_ch = int(outs[0].rows()) / 1024;
    for (size_t i = 0; i < outs.size(); ++i) {
        eval::ImageGrid one;
        one.tiles = outs[i];
        one.tile_shape = {out_ch, 32, 32};
        one.grid_cols = 1;
        one.grid_rows = 1;
        eval::save_grid_png(one, out_dir / (names[i] + "_transferred.png"));
    }

    // Combined Fig. 2-style grid: input in odd columns, output in even.
    eval::ImageGrid grid;
    grid.tile_shape = {3, 32, 32};
    grid.tiles.resize(3 * 32 * 32, Eigen::Index(2 * outs.size()));
    for (size_t i = 0; i < outs.size(); ++i) {
        grid.tiles.col(Eigen::Index(2 * i)) = ins[i];
        grid.tiles.col(Eigen::Index(2 * i + 1)) =
            out_ch == 1 ? MatF(data::replicate_channels(outs[i], {1, 32, 32})) : outs[i];
    }
    grid.grid_cols = int(2 * outs.size());
    grid.grid_rows = 1;
    eval::save_grid_png(grid, out_dir / "transfer_grid.png");
    std::cout << outs.size() << " images transferred; grid written to "
              << (out_dir / "transfer_grid.png").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"domain transfer experiments"};
    app.require_subcommand(1);
    GlobalArgs g;
    app.add_option("--config", g.config_path, "experiment config file");
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--out", g.out_dir, "output directory for runs and artifacts");
    app.add_option("--data-dir", g.data_dir, "dataset cache directory");
    app.add_flag("--dry-run", g.dry_run, "validate inputs, run nothing");

    std::string dataset, split;
    auto* fetch = app.add_subcommand("fetch", "download and decode a dataset split");
    fetch->add_option("dataset", dataset)->required();
    fetch->add_option("split", split)->required();

    auto* train_cmd = app.add_subcommand("train", "train per the config's train.task");

    std::string eval_classifier;
    auto* ablate = app.add_subcommand("ablate", "run the eight-row comparison suite");
    ablate->add_option("--eval-classifier", eval_classifier,
                       "run or step directory of the digit classifier used for scoring");

    std::string run_dir, suite;
    int query_count = 1000, unseen_digit = 3;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a finished run");
    eval_cmd->add_option("run_dir", run_dir)->required();
    eval_cmd->add_option("suite", suite)->required();
    eval_cmd->add_option("--eval-classifier", eval_classifier);
    eval_cmd->add_option("--queries", query_count, "query count for adapt-nn");
    eval_cmd->add_option("--digit", unseen_digit, "digit for the unseen suite");

    std::vector<std::string> inputs;
    auto* transfer_cmd = app.add_subcommand("transfer", "transfer input PNGs through a run");
    transfer_cmd->add_option("run_dir", run_dir)->required();
    transfer_cmd->add_option("inputs", inputs, "input PNG files");

    try {
        app.parse(argc, argv);
        if (*fetch) return cmd_fetch(g, dataset, split);
        if (*train_cmd) return cmd_train(g);
        if (*ablate) return cmd_ablate(g, eval_classifier);
        if (*eval_cmd) return cmd_eval(g, run_dir, suite, eval_classifier, query_count,
                                       unseen_digit);
        if (*transfer_cmd) return cmd_transfer(g, run_dir, inputs);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
