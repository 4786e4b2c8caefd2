#pragma once

#include <string>

#include <json.hpp>

#include "plvcsar/ivqr.hpp"
#include "plvcsar/model.hpp"
#include "plvcsar/ranktest.hpp"
#include "plvcsar/sim.hpp"

namespace plvcsar {

//! Reads a dataset CSV (header row: y, x1..xp, z1..zq, u in any order) and a
//! weight-matrix file (dense CSV, or triplet CSV with header "i,j,w").
Dataset read_dataset_csv(const std::string& data_path,
                         const std::string& weights_path);

//! Writes the covariate table and a dense weight matrix with full precision,
//! so a read-back reproduces the dataset bit for bit.
void write_dataset_csv(const Dataset& dataset, const std::string& data_path,
                       const std::string& weights_path);

Matrix read_weight_matrix(const std::string& path, Eigen::Index expected_n);

nlohmann::json to_json(const IvqrEstimate& estimate);
nlohmann::json to_json(const RankScoreResult& result);
nlohmann::json to_json(const ConfidenceIntervals& ci);
nlohmann::json to_json(const MonteCarloReport& report);
// Plug-in covariance pieces; the per-observation L3 blocks are omitted
// (reconstructable from L2 and the design).
nlohmann::json to_json(const CovarianceBundle& bundle);

std::string format_double(double v);

}  // namespace plvcsar
