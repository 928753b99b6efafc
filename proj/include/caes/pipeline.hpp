#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "caes/classifier.hpp"
#include "caes/config.hpp"
#include "caes/imaging.hpp"
#include "caes/ncc.hpp"
#include "caes/scoring.hpp"

namespace caes {

std::string iso_timestamp();

// Dataset per config: the seeded synthetic blob dataset or a directory load.
ImageDataset dataset_from_config(const RunConfig& cfg);

// Synthetic NCC corpus per config: loaded from ncc.corpus_path when set and
// present, generated otherwise.
std::vector<SamplePairSet> ncc_corpus_from_config(const RunConfig& cfg);

NccModel train_ncc_from_config(const RunConfig& cfg, NccTrainHistory* history = nullptr);

ClassifierModel train_classifier_from_config(const RunConfig& cfg,
                                             ClassifierTrainHistory* history = nullptr);

// One full scoring pass for one mask source; writes masks, the persisted
// feature table and the report files under out_dir.
CaesRunReport run_caes_scoring(const RunConfig& cfg, const ClassifierModel& classifier,
                               const NccModel& ncc, const ImageDataset& ds, MaskSource source,
                               const std::map<std::string, std::string>& checksums,
                               const std::filesystem::path& out_dir);

// The cmd_score pipeline: loads both checkpoints, builds the dataset and runs
// run_caes_scoring for each requested mask source. Returns report paths.
std::vector<std::filesystem::path> run_score_command(const RunConfig& cfg);

}  // namespace caes
