#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xva/classifier.hpp"
#include "xva/evalkit.hpp"

namespace xva {

Prediction predict(const ClassifierModel<float>& model, const MultiViewSample<float>& sample);

struct CrossValidationResult {
  FoldPlan plan;
  std::vector<std::vector<Prediction>> folds;  // test predictions per fold
  EvaluationReport report;
};

/// Trains a fresh model per fold (weights and shuffling seeded from
/// `seed` and the fold index) and predicts the held-out trials.
CrossValidationResult cross_validate(
    std::span<const MultiViewSample<float>> samples, const ClassifierConfig& config,
    const ClassifierTrainOptions& options, std::size_t k, FoldMode mode, std::uint64_t seed,
    const std::function<void(std::size_t fold, double accuracy)>& on_fold = {});

/// Accuracy of each fold's predictions.
std::vector<double> fold_accuracies(const CrossValidationResult& cv);

/// Parses predictions_jsonl() output back into per-fold lists.
std::vector<std::vector<Prediction>> parse_predictions_jsonl(const std::string& text,
                                                             const std::string& source);

}  // namespace xva
