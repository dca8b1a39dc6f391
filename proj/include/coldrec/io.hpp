#pragma once

#include <string>

#include "coldrec/types.hpp"

namespace coldrec {

// EMB1 binary format: 4-byte ASCII magic "EMB1", u32-le row count, u32-le
// column count, then rows*cols IEEE-754 little-endian float32, row-major.
void write_emb1(const std::string& path, const Mat& matrix);
Mat read_emb1(const std::string& path);

// CSV fallback for small feature files: header "dim0,dim1,...", one row of
// comma-separated values per item.
Mat read_features_csv(const std::string& path);
void write_features_csv(const std::string& path, const Mat& matrix);

// Dispatches on the EMB1 magic, falling back to CSV.
Mat read_feature_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// One index per line under a single-column header.
void write_index_csv(const std::string& path, std::span<const Index> ids,
                     const std::string& header = "item_id");
std::vector<Index> read_index_csv(const std::string& path);

}  // namespace coldrec
