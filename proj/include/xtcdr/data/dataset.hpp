// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace xtcdr::data {

inline constexpr const char* kControlLabel = "control";

struct CellMeta {
    std::string cell_id;
    std::string cell_line;
    std::string perturbation;
    double dose = 0.0;

    bool is_control() const { return perturbation == kControlLabel; }
    bool operator==(const CellMeta&) const = default;
};

/// Annotated cell x gene matrix. Expression values are stored row-major in
/// one contiguous buffer.
class ExpressionDataset {
public:
    ExpressionDataset() = default;
    explicit ExpressionDataset(std::vector<std::string> gene_ids);

    std::size_t gene_count() const noexcept { return gene_ids_.size(); }
    std::size_t row_count() const noexcept { return meta_.size(); }
    const std::vector<std::string>& gene_ids() const noexcept { return gene_ids_; }

    void add_row(CellMeta meta, std::span<const float> values);

    const CellMeta& meta(std::size_t row) const { return meta_[row]; }
    std::span<const float> values(std::size_t row) const {
        return {values_.data() + row * gene_count(), gene_count()};
    }
    std::span<float> mutable_values(std::size_t row) { return {values_.data() + row * gene_count(), gene_count()}; }

    /// Rows in `indices`, in that order.
    ExpressionDataset subset(const std::vector<std::size_t>& indices) const;

    /// Sorted distinct non-control perturbation labels.
    std::vector<std::string> perturbations() const;
    std::vector<std::string> cell_lines() const;
    std::vector<std::size_t> rows_where(const std::string& perturbation, const std::string& cell_line = {}) const;

    bool operator==(const ExpressionDataset&) const = default;

private:
    std::vector<std::string> gene_ids_;
    std::vector<CellMeta> meta_;
    std::vector<float> values_;
};

struct LoadOptions {
    bool log1p = false;
};

/// Parses the tab-separated layout
/// `cell_id  cell_line  perturbation  dose  <gene_1> ... <gene_G>`.
ExpressionDataset load_dataset(const std::filesystem::path& path, LoadOptions options = {});
ExpressionDataset parse_dataset(std::istream& in, const std::string& source_name, LoadOptions options = {});

/// Writes the same layout; floats use shortest round-trip formatting. The
/// file is written to a temporary sibling and renamed into place.
void save_dataset(const ExpressionDataset& ds, const std::filesystem::path& path);
void write_dataset(const ExpressionDataset& ds, std::ostream& out);

/// Keeps control rows and rows whose dose equals `dose` (within 1e-9).
ExpressionDataset filter_dose(const ExpressionDataset& ds, double dose);

/// Elementwise mean of every control row of `cell_line`.
std::vector<float> control_profile(const ExpressionDataset& ds, const std::string& cell_line);

/// Elementwise mean of the given rows (accumulated in double).
std::vector<float> mean_profile(const ExpressionDataset& ds, const std::vector<std::size_t>& rows);

/// Canonical dual-perturbation label: names sorted and joined with '+'.
std::string combo_label(const std::string& a, const std::string& b);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t dataset_digest(const ExpressionDataset& ds);

}  // namespace xtcdr::data
