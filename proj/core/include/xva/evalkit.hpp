#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xva {

struct Prediction {
  std::string trial_id;
  std::string subject_id;
  int true_label = 0;
  std::array<double, 2> probabilities{0.5, 0.5};

  int predicted() const { return probabilities[1] > probabilities[0] ? 1 : 0; }
  double score() const { return probabilities[1]; }
};

/// Throws UsageError unless the label is 0/1 and probabilities are in
/// [0, 1] summing to 1 within 1e-6.
void validate(const Prediction& p);

/// Class 1 is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// A metric whose denominator was zero is reported as 0 and flagged.
struct BinaryMetrics {
  ConfusionCounts counts;
  double accuracy = 0, sensitivity = 0, specificity = 0, f1 = 0, mcc = 0;
  bool degenerate_sensitivity = false;
  bool degenerate_specificity = false;
  bool degenerate_f1 = false;
  bool degenerate_mcc = false;

  bool any_degenerate() const {
    return degenerate_sensitivity || degenerate_specificity || degenerate_f1 ||
           degenerate_mcc;
  }
};

ConfusionCounts confusion_counts(std::span<const Prediction> preds);
BinaryMetrics scalars_from_counts(const ConfusionCounts& counts);
/// Throws UsageError on empty input.
BinaryMetrics confusion_and_scalars(std::span<const Prediction> preds);

/// Mann-Whitney U / (n1 n0) with ties counted one half. Throws
/// UndefinedMetricError unless both classes are present.
double roc_auc(std::span<const Prediction> preds);
double roc_auc(std::span<const double> scores, std::span<const int> labels);
/// Area under the precision-recall staircase: sum over distinct score
/// thresholds (descending, ties grouped) of (recall increment) x precision.
double pr_auc(std::span<const Prediction> preds);
double pr_auc(std::span<const double> scores, std::span<const int> labels);

// --- Cross-validation --------------------------------------------------------------

enum class FoldMode { kStratified, kSubjectGrouped };

struct FoldItem {
  std::string trial_id;
  std::string subject_id;
  int label = 0;
};

struct FoldPlan {
  std::size_t k = 10;
  FoldMode mode = FoldMode::kStratified;
  std::vector<std::string> trial_ids;
  std::vector<std::size_t> fold_of;  // parallel to trial_ids

  std::vector<std::size_t> test_indices(std::size_t fold) const;
  std::vector<std::size_t> train_indices(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Stratified: each class is shuffled and dealt round-robin, the fold
/// counter carrying over from one class to the next. Subject-grouped:
/// subjects are shuffled, ordered by trial count (largest first) and each
/// assigned whole to the currently smallest fold.
FoldPlan kfold(std::span<const FoldItem> items, std::size_t k, FoldMode mode,
               std::uint64_t seed);

// --- Trust ---------------------------------------------------------------------

enum class TrustGroup { kTP = 0, kTN = 1, kFP = 2, kFN = 3 };
const char* trust_group_name(TrustGroup g);

inline constexpr std::size_t kTrustBins = 50;

struct TrustSpectrum {
  TrustGroup group = TrustGroup::kTP;
  bool present = false;
  std::vector<double> trust;    // probability of the true class, per sample
  std::vector<double> density;  // kTrustBins bins over [0, 1], integrates to 1
  double nts = 0.0;             // mean trust; meaningful only when present
};

/// Throws UsageError on empty input.
std::array<TrustSpectrum, 4> trust_spectrum(std::span<const Prediction> preds);

// --- Reports -------------------------------------------------------------------

struct FoldMetrics {
  std::string name;  // "0".."k-1" or "pooled"
  std::size_t n = 0;
  BinaryMetrics metrics;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
};

struct EvaluationReport {
  std::vector<FoldMetrics> folds;
  FoldMetrics pooled;
};

/// Throws UsageError if there are no folds or any fold is empty.
EvaluationReport evaluate(std::span<const std::vector<Prediction>> folds);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population (ddof = 0)
};
MeanStd mean_std(std::span<const double> values);

/// Shortest decimal text that round-trips to the same double.
std::string format_real(double v);

/// One row per fold plus a "pooled" row.
std::string report_csv(const EvaluationReport& report);
/// "metric,pooled,fold_mean,fold_std" block: accuracy, sensitivity,
/// specificity, f1, roc_auc, pr_auc, mcc.
std::string metric_block_csv(const EvaluationReport& report);
/// One JSON object per prediction, with its fold index.
std::string predictions_jsonl(std::span<const std::vector<Prediction>> folds);
/// "group,present,n,nts" summary rows; absent groups leave n and nts empty.
std::string trust_csv(const std::array<TrustSpectrum, 4>& spectra);
/// "group,bin_low,bin_high,density" rows for present groups.
std::string trust_density_csv(const std::array<TrustSpectrum, 4>& spectra);

}  // namespace xva
