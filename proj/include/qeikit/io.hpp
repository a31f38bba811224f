/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_IO_HPP
#define QEIKIT_IO_HPP

#include <string>

#include "qeikit/gp.hpp"
#include "qeikit/optimize.hpp"

//! File formats. All writers are byte-stable for identical inputs.
//!
//!  - Design CSV: header x_1,..,x_d,value,noise_var, one row per point.
//!  - Batch CSV: header x_1,..,x_d, one row per batch point.
//!  - Model snapshot JSON: {"schema":"qeikit-model-v1", "kernel":
//!    {"variance", "lengthscales"}, "trend", "design": {"points", "values",
//!    "noise_vars"}}. Loading refactorizes, so the stored trend is
//!    informational.
//!  - History JSON-lines: a header record {"schema":"qeikit-history-v1",
//!    "strategy", "q", "initial_best", "aborted"} followed by one record per
//!    iteration mirroring optimize::IterationRecord.
//!
//! Malformed or unreadable files raise ContractError.
namespace qeikit::io {

gp::Design read_design_csv(const std::string& path);
void write_design_csv(const std::string& path, const gp::Design& design);

Matrix read_batch_csv(const std::string& path);
void write_batch_csv(const std::string& path, const Matrix& batch);

gp::GpModel read_model_json(const std::string& path);
void write_model_json(const std::string& path, const gp::GpModel& model);

//! The loaded history carries everything except final_design, which is not
//! persisted (resume from a model snapshot instead).
optimize::RunHistory read_history_jsonl(const std::string& path);
void write_history_jsonl(const std::string& path,
                         const optimize::RunHistory& history);

}  // namespace qeikit::io

#endif  // QEIKIT_IO_HPP
