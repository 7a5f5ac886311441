#pragma once

#include <filesystem>

namespace metaflow::testing {

inline std::filesystem::path data_dir() { return METAFLOW_TEST_DATA_DIR; }
inline std::filesystem::path gpt2_encoder() { return data_dir() / "gpt2" / "encoder.json"; }
inline std::filesystem::path gpt2_merges() { return data_dir() / "gpt2" / "vocab.bpe"; }

}  // namespace metaflow::testing
