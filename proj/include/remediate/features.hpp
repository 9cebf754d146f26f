#pragma once

// Turns parcel records into dense numeric rows for the learners.
// Numeric features pass through (missing stays NaN); categorical features are
// one-hot encoded, and a blank category makes the whole block NaN.

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "remediate/data_model.hpp"

namespace remediate {

struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major
    std::vector<std::string> names;

    FeatureMatrix() = default;
    FeatureMatrix(std::size_t r, std::size_t c, std::vector<std::string> n = {})
        : rows(r), cols(c), values(r * c, 0.0), names(std::move(n)) {}

    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    FeatureMatrix select_rows(std::span<const std::size_t> idx) const;
};

class FeatureEncoder {
public:
    struct Options {
        bool include_precinct = false;
        bool include_record_label = true;
        bool include_private_inspection = true;
    };

    FeatureEncoder() = default;
    // Category levels are collected from every parcel in the dataset (features only).
    static FeatureEncoder build(const CityDataset& ds, const Options& options);
    static FeatureEncoder build(const CityDataset& ds) { return build(ds, Options{}); }

    std::size_t width() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    void encode(const ParcelRecord& p, std::span<double> out) const;
    std::vector<double> encode(const ParcelRecord& p) const;
    FeatureMatrix encode_all(const CityDataset& ds) const;

    nlohmann::json to_json() const;
    static FeatureEncoder from_json(const nlohmann::json& j);

private:
    enum class Source { Precinct, RecordLabel, PrivateInspection, Extra };
    struct Block {
        Source source = Source::Extra;
        std::size_t extra_index = 0;
        std::vector<std::string> levels;
    };

    std::string category_of(const ParcelRecord& p, const Block& b) const;

    std::size_t n_numeric_ = 0;
    std::vector<Block> blocks_;
    std::vector<std::string> names_;
};

}  // namespace remediate
