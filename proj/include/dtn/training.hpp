#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>

#include "dtn/checkpoint.hpp"
#include "dtn/config.hpp"
#include "dtn/data.hpp"
#include "dtn/losses.hpp"
#include "dtn/networks.hpp"
#include "dtn/nn/adam.hpp"

namespace dtn::train {

enum class Ablation { NO_TID, NO_CONST, NO_GAN, NO_F_IN_G, BASELINE };
enum class Direction { S_TO_T, T_TO_S };
enum class Task { F, EVAL_CLASSIFIER, DTN, BASELINE };

struct TrainingConfig {
    Task task = Task::DTN;
    loss::LossWeights<float> weights;       // alpha=beta=15, gamma=0 by default
    float learning_rate = 2e-4f;
    float adam_beta1 = 0.5f;
    float adam_beta2 = 0.999f;
    int batch_size = 128;
    int64_t total_steps = 3000;
    uint64_t seed = 1;
    std::set<Ablation> ablation;
    Direction direction = Direction::S_TO_T;
    data::ClassOmissionFilter omission;
    std::optional<size_t> desk_scale_n;     // seeded subsample of the source set
    int64_t checkpoint_every = 1000;
    std::string f_checkpoint;               // pretrained f for DTN/baseline runs

    void validate() const;
    static TrainingConfig from_config(const cfg::Config& c);
    cfg::Config to_config() const;
    std::string hash() const { return cfg::config_hash(to_config()); }
};

// One record per optimization step, appended to <run_dir>/loss_log.txt.
class TrainLog {
public:
    explicit TrainLog(const std::filesystem::path& file);
    void append(const loss::LossReport& r, double lr, double wall_ms);

private:
    std::ofstream out_;
};

std::string format_loss_record(const loss::LossReport& r, double lr, double wall_ms);

struct ClassifierResult {
    std::unique_ptr<net::FeatureNetwork> net;
    double final_loss = 0;
};

// Supervised cross-entropy training of the digit network (used both for f
// on SVHN and for the MNIST evaluation classifier; they share one
// architecture).
ClassifierResult train_classifier(const data::DatasetSplit& labeled, const TrainingConfig& config,
                                  const std::filesystem::path& run_dir);

struct DtnResult {
    std::unique_ptr<net::GeneratorHead> g;
    std::unique_ptr<net::Discriminator> d;
    // Only present under the NO_F_IN_G ablation: the fresh encoder that
    // replaces f inside G.
    std::unique_ptr<net::BaselineGenerator> no_f_generator;
    bool diverged = false;
    int64_t steps_completed = 0;
};

// Alternating optimization: one discriminator step minimizing the ternary
// loss, then one generator step minimizing the compound loss, per
// iteration. f is frozen throughout.
DtnResult train_dtn(const data::DatasetSplit& s, const data::DatasetSplit& t,
                    net::FeatureNetwork& f, const TrainingConfig& config,
                    const std::filesystem::path& run_dir);

struct BaselineResult {
    std::unique_ptr<net::BaselineGenerator> generator;
    std::unique_ptr<net::Discriminator> d;
    bool diverged = false;
    int64_t steps_completed = 0;
};

// The two-term formulation: binary GAN risk plus f-constancy, with a
// generator acting directly on source pixels.
BaselineResult train_baseline(const data::DatasetSplit& s, const data::DatasetSplit& t,
                              net::FeatureNetwork& f, const TrainingConfig& config,
                              const std::filesystem::path& run_dir);

// Checkpoint helpers (blob + sidecar manifest per network).
void save_network(const std::filesystem::path& dir, const std::string& arch,
                  std::vector<net::TensorRefF> tensors, int64_t step, uint64_t seed,
                  const std::string& config_hash);
void load_network(const std::filesystem::path& dir, const std::string& arch,
                  std::vector<net::TensorRefF> tensors);

// Prepares the batch the feature network consumes: replicates grayscale.
nn::MatF to_feature_input(const nn::MatF& batch, const nn::TensorShape& shape);

}  // namespace dtn::train
