#include "dtn/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dtn::train {
namespace {

using loss::LossReport;
using loss::LossWeights;
using nn::Adam;
using nn::AdamConfig;
using nn::MatF;

namespace fs = std::filesystem;

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string ablation_name(Ablation a) {
    switch (a) {
        case Ablation::NO_TID: return "no_tid";
        case Ablation::NO_CONST: return "no_const";
        case Ablation::NO_GAN: return "no_gan";
        case Ablation::NO_F_IN_G: return "no_f_in_g";
        case Ablation::BASELINE: return "baseline";
    }
    return "?";
}

Ablation ablation_from_name(const std::string& s, int line) {
    if (s == "no_tid") return Ablation::NO_TID;
    if (s == "no_const") return Ablation::NO_CONST;
    if (s == "no_gan") return Ablation::NO_GAN;
    if (s == "no_f_in_g") return Ablation::NO_F_IN_G;
    if (s == "baseline") return Ablation::BASELINE;
    throw UsageError("unknown ablation flag '" + s + "' at line " + std::to_string(line));
}

AdamConfig<float> adam_config(const TrainingConfig& c) {
    return {c.learning_rate, c.adam_beta1, c.adam_beta2, 1e-8f};
}

MatF hcat(const MatF& a, const MatF& b) {
    MatF out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

// Collapses a gradient through channel replication: the broadcast's
// adjoint sums the three channel blocks.
MatF collapse_replicated(const MatF& d3, int hw) {
    return d3.topRows(hw) + d3.middleRows(hw, hw) + d3.bottomRows(hw);
}

fs::path step_dir(const fs::path& run_dir, int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%08lld", static_cast<long long>(step));
    return run_dir / buf;
}

void update_latest(const fs::path& run_dir, const fs::path& target) {
    const fs::path link = run_dir / "latest";
    std::error_code ec;
    fs::remove(link, ec);
    fs::create_directory_symlink(target.filename(), link, ec);
}

}  // namespace

void TrainingConfig::validate() const {
    if (ablation.count(Ablation::BASELINE) && ablation.count(Ablation::NO_F_IN_G))
        throw UsageError("config: ablation flags 'baseline' and 'no_f_in_g' are exclusive");
    if (learning_rate <= 0) throw UsageError("config: learning_rate must be positive");
    if (batch_size < 2) throw UsageError("config: batch_size must be >= 2");
    if (adam_beta1 <= 0 || adam_beta1 >= 1 || adam_beta2 <= 0 || adam_beta2 >= 1)
        throw UsageError("config: adam betas must lie in (0,1)");
    if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0)
        throw UsageError("config: loss weights must be nonnegative");
    if (weights.tv_exponent_b <= 0) throw UsageError("config: tv_exponent_b must be positive");
    if (total_steps < 0) throw UsageError("config: total_steps must be >= 0");
}

TrainingConfig TrainingConfig::from_config(const cfg::Config& c) {
    static const std::set<std::string> known = {
        "train.task",          "train.alpha",         "train.beta",
        "train.gamma",         "train.tv_exponent_b", "train.learning_rate",
        "train.adam_beta1",    "train.adam_beta2",    "train.batch_size",
        "train.total_steps",   "train.seed",          "train.ablation",
        "train.direction",     "train.checkpoint_every", "train.f_checkpoint",
        "data.omit_from_s",    "data.omit_from_t",    "data.omit_from_f_training",
        "data.desk_scale_n",
    };
    for (const auto& [k, v] : c.values)
        if (!known.count(k))
            throw UsageError("unknown config key '" + k + "' at line " +
                             std::to_string(c.line(k)));

    TrainingConfig t;
    auto get = [&](const char* k) -> std::optional<std::string> {
        if (!c.has(k)) return std::nullopt;
        return c.at(k);
    };
    if (auto v = get("train.task")) {
        if (*v == "f") t.task = Task::F;
        else if (*v == "eval-classifier") t.task = Task::EVAL_CLASSIFIER;
        else if (*v == "dtn") t.task = Task::DTN;
        else if (*v == "baseline") t.task = Task::BASELINE;
        else
            throw UsageError("bad train.task '" + *v + "' at line " +
                             std::to_string(c.line("train.task")));
    }
    if (auto v = get("train.alpha")) t.weights.alpha = std::stof(*v);
    if (auto v = get("train.beta")) t.weights.beta = std::stof(*v);
    if (auto v = get("train.gamma")) t.weights.gamma = std::stof(*v);
    if (auto v = get("train.tv_exponent_b")) t.weights.tv_exponent_b = std::stof(*v);
    if (auto v = get("train.learning_rate")) t.learning_rate = std::stof(*v);
    if (auto v = get("train.adam_beta1")) t.adam_beta1 = std::stof(*v);
    if (auto v = get("train.adam_beta2")) t.adam_beta2 = std::stof(*v);
    if (auto v = get("train.batch_size")) t.batch_size = std::stoi(*v);
    if (auto v = get("train.total_steps")) t.total_steps = std::stoll(*v);
    if (auto v = get("train.seed")) t.seed = std::stoull(*v);
    if (auto v = get("train.checkpoint_every")) t.checkpoint_every = std::stoll(*v);
    if (auto v = get("train.f_checkpoint")) t.f_checkpoint = *v;
    if (auto v = get("train.direction")) {
        if (*v == "s_to_t") t.direction = Direction::S_TO_T;
        else if (*v == "t_to_s") t.direction = Direction::T_TO_S;
        else
            throw UsageError("bad train.direction '" + *v + "' at line " +
                             std::to_string(c.line("train.direction")));
    }
    if (auto v = get("train.ablation"); v && !v->empty()) {
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ','))
            t.ablation.insert(ablation_from_name(item, c.line("train.ablation")));
    }
    if (auto v = get("data.omit_from_s")) t.omission.omit_from_s = std::stoi(*v);
    if (auto v = get("data.omit_from_t")) t.omission.omit_from_t = std::stoi(*v);
    if (auto v = get("data.omit_from_f_training")) t.omission.omit_from_f_training = std::stoi(*v);
    if (auto v = get("data.desk_scale_n")) t.desk_scale_n = std::stoull(*v);
    t.validate();
    return t;
}

cfg::Config TrainingConfig::to_config() const {
    cfg::Config c;
    auto set = [&](const std::string& k, const std::string& v) { c.values[k] = v; };
    auto fmt = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    switch (task) {
        case Task::F: set("train.task", "f"); break;
        case Task::EVAL_CLASSIFIER: set("train.task", "eval-classifier"); break;
        case Task::DTN: set("train.task", "dtn"); break;
        case Task::BASELINE: set("train.task", "baseline"); break;
    }
    set("train.alpha", fmt(weights.alpha));
    set("train.beta", fmt(weights.beta));
    set("train.gamma", fmt(weights.gamma));
    set("train.tv_exponent_b", fmt(weights.tv_exponent_b));
    set("train.learning_rate", fmt(learning_rate));
    set("train.adam_beta1", fmt(adam_beta1));
    set("train.adam_beta2", fmt(adam_beta2));
    set("train.batch_size", std::to_string(batch_size));
    set("train.total_steps", std::to_string(total_steps));
    set("train.seed", std::to_string(seed));
    set("train.checkpoint_every", std::to_string(checkpoint_every));
    set("train.direction", direction == Direction::S_TO_T ? "s_to_t" : "t_to_s");
    if (!f_checkpoint.empty()) set("train.f_checkpoint", f_checkpoint);
    if (!ablation.empty()) {
        std::string v;
        for (Ablation a : ablation) v += (v.empty() ? "" : ",") + ablation_name(a);
        set("train.ablation", v);
    }
    if (omission.omit_from_s) set("data.omit_from_s", std::to_string(*omission.omit_from_s));
    if (omission.omit_from_t) set("data.omit_from_t", std::to_string(*omission.omit_from_t));
    if (omission.omit_from_f_training)
        set("data.omit_from_f_training", std::to_string(*omission.omit_from_f_training));
    if (desk_scale_n) set("data.desk_scale_n", std::to_string(*desk_scale_n));
    return c;
}

std::string format_loss_record(const LossReport& r, double lr, double wall_ms) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "step=%lld l_d=%.9g l_gang=%.9g l_const=%.9g l_tid=%.9g l_tv=%.9g "
                  "l_g_total=%.9g lr=%.9g wall_ms=%.3f",
                  static_cast<long long>(r.step), r.l_d, r.l_gang, r.l_const, r.l_tid, r.l_tv,
                  r.l_g_total, lr, wall_ms);
    return buf;
}

TrainLog::TrainLog(const fs::path& file) : out_(file) {
    if (!out_) throw std::runtime_error("cannot open training log " + file.string());
}

void TrainLog::append(const LossReport& r, double lr, double wall_ms) {
    out_ << format_loss_record(r, lr, wall_ms) << "\n";
    out_.flush();
}

void save_network(const fs::path& dir, const std::string& arch,
                  std::vector<net::TensorRefF> tensors, int64_t step, uint64_t seed,
                  const std::string& config_hash) {
    fs::create_directories(dir);
    ckpt::save_tensors(dir / (arch + ".bin"), tensors);
    ckpt::save_manifest(dir / (arch + ".manifest"), {arch, step, seed, config_hash});
}

void load_network(const fs::path& dir, const std::string& arch,
                  std::vector<net::TensorRefF> tensors) {
    ckpt::load_tensors(dir / (arch + ".bin"), std::move(tensors));
}

nn::MatF to_feature_input(const nn::MatF& batch, const nn::TensorShape& shape) {
    if (shape.c == 3) return batch;
    if (shape.c == 1) return data::replicate_channels(batch, shape);
    throw UsageError("to_feature_input: expected 1 or 3 channels");
}

ClassifierResult train_classifier(const data::DatasetSplit& labeled,
                                  const TrainingConfig& config, const fs::path& run_dir) {
    if (!labeled.labeled()) throw UsageError("train_classifier: split must be labeled");
    config.validate();
    fs::create_directories(run_dir);
    TrainLog log(run_dir / "loss_log.txt");
    const std::string hash = config.hash();

    ClassifierResult result;
    result.net = std::make_unique<net::FeatureNetwork>(config.seed);
    net::FeatureNetwork& net = *result.net;
    Adam<float> opt(net.tensors(), {config.learning_rate, config.adam_beta1, config.adam_beta2,
                                    1e-8f});
    data::BatchStream stream(labeled.size(), config.batch_size, config.seed);
    const nn::TensorShape shape = labeled.shape();
    const double t0 = now_ms();

    for (int64_t step = 1; step <= config.total_steps; ++step) {
        const std::vector<int> idx = stream.next();
        const MatF x = to_feature_input(labeled.batch(idx), shape);
        const std::vector<int> y = labeled.batch_labels(idx);
        const MatF probs = net.classify(x, true);
        float ce = 0;
        MatF dp = MatF::Zero(probs.rows(), probs.cols());
        const float n = static_cast<float>(idx.size());
        for (size_t b = 0; b < idx.size(); ++b) {
            const float p = std::max(probs(y[b], static_cast<Eigen::Index>(b)),
                                     static_cast<float>(loss::kLogClamp));
            ce -= std::log(p) / n;
            if (probs(y[b], static_cast<Eigen::Index>(b)) >= loss::kLogClamp)
                dp(y[b], static_cast<Eigen::Index>(b)) = -1.0f / (p * n);
        }
        net.zero_grad();
        net.backward_classify(dp);
        opt.step();
        result.final_loss = ce;
        LossReport r = loss::make_report<float>(step, 0, ce, 0, 0, 0, config.weights);
        log.append(r, config.learning_rate, now_ms() - t0);
        if (!std::isfinite(ce)) break;
        if (config.checkpoint_every > 0 &&
            (step % config.checkpoint_every == 0 || step == config.total_steps)) {
            const fs::path dir = step_dir(run_dir, step);
            save_network(dir, "f", net.tensors(), step, config.seed, hash);
            ckpt::save_tensors(dir / "f_opt.bin", opt.state("f_opt"));
            update_latest(run_dir, dir);
        }
    }
    if (config.total_steps == 0) {
        const fs::path dir = step_dir(run_dir, 0);
        save_network(dir, "f", net.tensors(), 0, config.seed, hash);
        update_latest(run_dir, dir);
    }
    return result;
}

DtnResult train_dtn(const data::DatasetSplit& s, const data::DatasetSplit& t,
                    net::FeatureNetwork& f, const TrainingConfig& config,
                    const fs::path& run_dir) {
    config.validate();
    if (config.ablation.count(Ablation::BASELINE))
        throw UsageError("train_dtn: use train_baseline for the baseline formulation");
    fs::create_directories(run_dir);
    TrainLog log(run_dir / "loss_log.txt");
    const std::string hash = config.hash();
    const bool no_gan = config.ablation.count(Ablation::NO_GAN) > 0;
    const bool no_f = config.ablation.count(Ablation::NO_F_IN_G) > 0;
    const float alpha = config.ablation.count(Ablation::NO_CONST) ? 0.0f : config.weights.alpha;
    const float beta = config.ablation.count(Ablation::NO_TID) ? 0.0f : config.weights.beta;
    const float gamma = config.weights.gamma;
    LossWeights<float> w = config.weights;
    w.alpha = alpha;
    w.beta = beta;

    const int target_channels = t.shape().c;
    const int hw = net::kImageSize * net::kImageSize;
    const int out_size = target_channels * hw;

    DtnResult result;
    result.g = std::make_unique<net::GeneratorHead>(config.seed, target_channels);
    result.d = std::make_unique<net::Discriminator>(config.seed + 1, 3, target_channels);
    if (no_f)
        result.no_f_generator = std::make_unique<net::BaselineGenerator>(config.seed + 2,
                                                                         target_channels);
    net::GeneratorHead& g = *result.g;
    net::Discriminator& d = *result.d;

    std::vector<net::TensorRefF> g_params =
        no_f ? result.no_f_generator->tensors() : g.tensors();
    Adam<float> opt_g(g_params, adam_config(config));
    Adam<float> opt_d(d.tensors(), adam_config(config));

    data::BatchStream s_stream(s.size(), config.batch_size, config.seed);
    data::BatchStream t_stream(t.size(), config.batch_size, config.seed + 1);
    const double t0 = now_ms();
    int64_t last_checkpoint = -1;

    auto checkpoint = [&](int64_t step) {
        const fs::path dir = step_dir(run_dir, step);
        if (no_f)
            save_network(dir, "g_nof", result.no_f_generator->tensors(), step, config.seed, hash);
        else
            save_network(dir, "g", g.tensors(), step, config.seed, hash);
        save_network(dir, "d", d.tensors(), step, config.seed, hash);
        ckpt::save_tensors(dir / "g_opt.bin", opt_g.state("g_opt"));
        ckpt::save_tensors(dir / "d_opt.bin", opt_d.state("d_opt"));
        update_latest(run_dir, dir);
        last_checkpoint = step;
    };

    for (int64_t step = 1; step <= config.total_steps; ++step) {
        const std::vector<int> si = s_stream.next();
        const std::vector<int> ti = t_stream.next();
        const Eigen::Index ns = static_cast<Eigen::Index>(si.size());
        const Eigen::Index nt = static_cast<Eigen::Index>(ti.size());
        const MatF x_s = s.batch(si);
        const MatF x_t = t.batch(ti);
        const MatF x_s3 = to_feature_input(x_s, s.shape());
        const MatF x_t3 = to_feature_input(x_t, t.shape());

        // G's forward pass, shared by the discriminator and generator
        // steps of this iteration (g's parameters change only at the end).
        MatF g_all;
        MatF f_s;  // external f features of the source batch (constancy anchor)
        if (no_f) {
            g_all = result.no_f_generator->generate(hcat(x_s3, x_t3), true);
            if (alpha > 0) f_s = f.features(x_s3, false);
        } else {
            f_s = f.features(x_s3, false);
            const MatF f_t = f.features(x_t3, false);
            g_all = g.generate(hcat(f_s, f_t), true);
        }
        const MatF g_s = g_all.leftCols(ns);
        const MatF g_t = g_all.rightCols(nt);

        bool clamped = false;
        float l_d = 0;
        if (!no_gan) {
            // Discriminator step: minimize the ternary loss on
            // [G(s), G(t), real t] in one combined forward.
            MatF d_in(out_size, ns + nt + nt);
            d_in << g_s, g_t, x_t;
            const MatF p = d.discriminate(d_in, true);
            const MatF p_gs = p.leftCols(ns);
            const MatF p_gt = p.middleCols(ns, nt);
            const MatF p_t = p.rightCols(nt);
            l_d = loss::loss_discriminator(p_gs, p_gt, p_t, &clamped);
            MatF d_gs, d_gt, d_t;
            loss::loss_discriminator_grad(p_gs, p_gt, p_t, d_gs, d_gt, d_t);
            MatF dp(p.rows(), p.cols());
            dp << d_gs, d_gt, d_t;
            d.zero_grad();
            d.backward(dp);
            opt_d.step();
        }

        // Generator step: compound loss through the freshly updated D.
        MatF dg_all = MatF::Zero(out_size, ns + nt);
        float l_gang = 0, l_const = 0, l_tid = 0, l_tv = 0;
        if (!no_gan) {
            const MatF p_g = d.discriminate(g_all, true);
            const MatF p_gs = p_g.leftCols(ns);
            const MatF p_gt = p_g.rightCols(nt);
            l_gang = loss::loss_gan_generator(p_gs, p_gt, &clamped);
            MatF d_gs, d_gt;
            loss::loss_gan_generator_grad(p_gs, p_gt, d_gs, d_gt);
            MatF dp(p_g.rows(), p_g.cols());
            dp << d_gs, d_gt;
            d.zero_grad();
            dg_all += d.backward(dp);
        }
        if (alpha > 0) {
            const MatF g_s3 = target_channels == 1
                                  ? data::replicate_channels(g_s, {1, net::kImageSize,
                                                                   net::kImageSize})
                                  : g_s;
            const MatF f_gs = f.features(g_s3, false);
            l_const = loss::loss_constancy(f_s, f_gs);
            MatF d_fgs;
            loss::loss_constancy_grad(f_s, f_gs, d_fgs);
            f.zero_grad();
            MatF dx3 = f.backward_features(d_fgs);
            dg_all.leftCols(ns) +=
                alpha * (target_channels == 1 ? MatF(collapse_replicated(dx3, hw)) : dx3);
        }
        if (beta > 0) {
            l_tid = loss::loss_identity(x_t, g_t);
            MatF d_gt;
            loss::loss_identity_grad(x_t, g_t, d_gt);
            dg_all.rightCols(nt) += beta * d_gt;
        }
        if (gamma > 0) {
            const nn::TensorShape out_shape{target_channels, net::kImageSize, net::kImageSize};
            l_tv = loss::loss_total_variation(g_all, out_shape, config.weights.tv_exponent_b);
            MatF d_tv;
            loss::loss_total_variation_grad(g_all, out_shape, config.weights.tv_exponent_b, d_tv);
            dg_all += gamma * d_tv;
        }
        if (no_f) {
            result.no_f_generator->zero_grad();
            result.no_f_generator->backward(dg_all);
        } else {
            g.zero_grad();
            g.backward(dg_all);
        }
        opt_g.step();

        LossReport r = loss::make_report<float>(step, l_d, l_gang, l_const, l_tid, l_tv, w,
                                                clamped);
        log.append(r, config.learning_rate, now_ms() - t0);
        result.steps_completed = step;
        if (!std::isfinite(r.l_g_total) || !std::isfinite(r.l_d)) {
            result.diverged = true;
            break;  // last good checkpoint stays in place
        }
        if (config.checkpoint_every > 0 &&
            (step % config.checkpoint_every == 0 || step == config.total_steps))
            checkpoint(step);
    }
    if (last_checkpoint < result.steps_completed && !result.diverged)
        checkpoint(result.steps_completed);
    return result;
}

BaselineResult train_baseline(const data::DatasetSplit& s, const data::DatasetSplit& t,
                              net::FeatureNetwork& f, const TrainingConfig& config,
                              const fs::path& run_dir) {
    config.validate();
    fs::create_directories(run_dir);
    TrainLog log(run_dir / "loss_log.txt");
    const std::string hash = config.hash();
    const float alpha = config.ablation.count(Ablation::NO_CONST) ? 0.0f : config.weights.alpha;
    LossWeights<float> w = config.weights;
    w.alpha = alpha;
    w.beta = 0;
    w.gamma = 0;

    const int target_channels = t.shape().c;
    BaselineResult result;
    result.generator = std::make_unique<net::BaselineGenerator>(config.seed, target_channels);
    result.d = std::make_unique<net::Discriminator>(config.seed + 1, 2, target_channels);
    net::BaselineGenerator& b = *result.generator;
    net::Discriminator& d = *result.d;
    Adam<float> opt_g(b.tensors(), adam_config(config));
    Adam<float> opt_d(d.tensors(), adam_config(config));
    data::BatchStream s_stream(s.size(), config.batch_size, config.seed);
    data::BatchStream t_stream(t.size(), config.batch_size, config.seed + 1);
    const double t0 = now_ms();
    const int hw = net::kImageSize * net::kImageSize;
    int64_t last_checkpoint = -1;

    auto checkpoint = [&](int64_t step) {
        const fs::path dir = step_dir(run_dir, step);
        save_network(dir, "baseline_g", b.tensors(), step, config.seed, hash);
        save_network(dir, "d", d.tensors(), step, config.seed, hash);
        ckpt::save_tensors(dir / "g_opt.bin", opt_g.state("g_opt"));
        ckpt::save_tensors(dir / "d_opt.bin", opt_d.state("d_opt"));
        update_latest(run_dir, dir);
        last_checkpoint = step;
    };

    for (int64_t step = 1; step <= config.total_steps; ++step) {
        const std::vector<int> si = s_stream.next();
        const std::vector<int> ti = t_stream.next();
        const Eigen::Index ns = static_cast<Eigen::Index>(si.size());
        const Eigen::Index nt = static_cast<Eigen::Index>(ti.size());
        const MatF x_s3 = to_feature_input(s.batch(si), s.shape());
        const MatF x_t = t.batch(ti);

        const MatF g_s = b.generate(x_s3, true);

        // Discriminator step on [fake, real].
        bool clamped = false;
        MatF d_in(g_s.rows(), ns + nt);
        d_in << g_s, x_t;
        const MatF p = d.discriminate(d_in, true);
        MatF d_fake_grad, d_real_grad;
        const float r_gan_d = loss::neg_log_row(MatF(p.rightCols(nt)), 0, &clamped) +
                              loss::neg_log_row(MatF(p.leftCols(ns)), 1, &clamped);
        loss::neg_log_row_grad(MatF(p.leftCols(ns)), 1, d_fake_grad);
        loss::neg_log_row_grad(MatF(p.rightCols(nt)), 0, d_real_grad);
        MatF dp(p.rows(), p.cols());
        dp << d_fake_grad, d_real_grad;
        d.zero_grad();
        d.backward(dp);
        opt_d.step();

        // Generator step: non-saturating adversarial term + f-constancy.
        const MatF p_fake = d.discriminate(g_s, true);
        const float r_gan_g = loss::neg_log_row(p_fake, 0, &clamped);
        MatF dp_fake;
        loss::neg_log_row_grad(p_fake, 0, dp_fake);
        d.zero_grad();
        MatF dg = d.backward(dp_fake);

        float r_const = 0;
        if (alpha > 0) {
            const MatF f_x = f.features(x_s3, false);
            const MatF g_s3 =
                target_channels == 1
                    ? data::replicate_channels(g_s, {1, net::kImageSize, net::kImageSize})
                    : g_s;
            const MatF f_gs = f.features(g_s3, false);
            r_const = loss::loss_constancy(f_x, f_gs);
            MatF d_fgs;
            loss::loss_constancy_grad(f_x, f_gs, d_fgs);
            f.zero_grad();
            MatF dx3 = f.backward_features(d_fgs);
            dg += alpha * (target_channels == 1 ? MatF(collapse_replicated(dx3, hw)) : dx3);
        }
        b.zero_grad();
        b.backward(dg);
        opt_g.step();

        LossReport r = loss::make_report<float>(step, r_gan_d, r_gan_g, r_const, 0, 0, w,
                                                clamped);
        log.append(r, config.learning_rate, now_ms() - t0);
        result.steps_completed = step;
        if (!std::isfinite(r.l_g_total) || !std::isfinite(r.l_d)) {
            result.diverged = true;
            break;
        }
        if (config.checkpoint_every > 0 &&
            (step % config.checkpoint_every == 0 || step == config.total_steps))
            checkpoint(step);
    }
    if (last_checkpoint < result.steps_completed && !result.diverged)
        checkpoint(result.steps_completed);
    return result;
}

}  // namespace dtn::train
