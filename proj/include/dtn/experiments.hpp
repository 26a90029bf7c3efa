#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dtn/evaluation.hpp"
#include "dtn/training.hpp"

namespace dtn::exp {

// Sortable, collision-free: UTC timestamp plus the config hash prefix.
std::string make_run_id(const cfg::Config& c);

struct ExperimentManifest {
    std::string run_id;
    cfg::Config config;
    std::string build_version;
    std::vector<std::string> metrics;    // MetricsReport file paths
    std::vector<std::string> artifacts;  // checkpoints, images, tables

    // Throws UsageError if any referenced path is missing.
    void save(const std::filesystem::path& file) const;
    static ExperimentManifest load(const std::filesystem::path& file);
};

std::string build_version();

// Applies the seeded desk-scale subsample and class-omission filters a
// config asks for; returns the split unchanged when neither applies.
data::DatasetSplit prepare_source(const data::DatasetSplit& s, const train::TrainingConfig& c);
data::DatasetSplit prepare_target(const data::DatasetSplit& t, const train::TrainingConfig& c);

// Resolves <run_dir>/latest to its step directory.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

// A transfer function reconstructed from a finished run's checkpoint.
eval::TransferFn load_transfer(const std::filesystem::path& run_dir, net::FeatureNetwork& f);

struct SuiteRow {
    std::string name;
    std::string run_id;
    double accuracy = 0;  // transferred accuracy under the evaluation classifier
    std::string error;    // nonempty marks a failed row; accuracy invalid
};

// The six compound-loss configurations plus the two controls, each trained
// from base_config and scored by transferring the source test set through
// the learned map into the evaluation classifier.
std::vector<SuiteRow> run_ablation_suite(const data::DatasetSplit& s,
                                         const data::DatasetSplit& t,
                                         const data::DatasetSplit& s_test,
                                         net::FeatureNetwork& f, net::EvalClassifier& eval_clf,
                                         const train::TrainingConfig& base_config,
                                         const std::filesystem::path& out_dir);

void write_suite_table(const std::vector<SuiteRow>& rows, const std::filesystem::path& file);
std::vector<SuiteRow> read_suite_table(const std::filesystem::path& file);

struct UnseenDigitRow {
    std::string name;  // omit_s, omit_t, omit_both, omit_all
    std::string run_id;
    eval::MetricsReport report;  // per-class accuracy on the target test set
    std::string error;
};

// The four class-omission variants around one digit. The first three reuse
// the caller's f; the last retrains f without the digit (on f_train).
std::vector<UnseenDigitRow> run_unseen_digit_suite(
    const data::DatasetSplit& s, const data::DatasetSplit& t, const data::DatasetSplit& s_test,
    const data::DatasetSplit& f_train, net::FeatureNetwork& f, net::EvalClassifier& eval_clf,
    const train::TrainingConfig& base_config, int digit, const std::filesystem::path& out_dir);

// Grayscale control: collapses RGB to its channel mean so the
// single-channel evaluation classifier can score untransferred images.
nn::MatF collapse_to_gray(const nn::MatF& batch, const nn::TensorShape& shape);

}  // namespace dtn::exp
