#include "remediate/features.hpp"

#include <algorithm>
#include <set>

#include "remediate/error.hpp"

namespace remediate {

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out(idx.size(), cols, names);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        auto src = row(idx[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

namespace {

const char* source_name(int s) {
    switch (s) {
        case 0: return "precinct";
        case 1: return "record_label";
        case 2: return "private_inspection";
        default: return "extra";
    }
}

}  // namespace

std::string FeatureEncoder::category_of(const ParcelRecord& p, const Block& b) const {
    switch (b.source) {
        case Source::Precinct: return p.precinct;
        case Source::RecordLabel: return p.record_label;
        case Source::PrivateInspection:
            return p.private_inspection == PortionMaterial::Unknown
                       ? std::string()
                       : std::string(to_string(p.private_inspection));
        case Source::Extra: return p.categorical.at(b.extra_index);
    }
    return {};
}

FeatureEncoder FeatureEncoder::build(const CityDataset& ds, const Options& options) {
    FeatureEncoder enc;
    const auto& schema = ds.schema();
    enc.n_numeric_ = schema.numeric_names.size();
    enc.names_ = schema.numeric_names;

    auto add_block = [&](Source src, std::size_t extra, const std::string& name) {
        Block b{src, extra, {}};
        std::set<std::string> levels;
        for (const auto& p : ds.parcels()) {
            auto c = enc.category_of(p, b);
            if (!c.empty()) levels.insert(std::move(c));
        }
        if (src == Source::PrivateInspection) {
            // Inspections arrive over time; fix the level set up front.
            for (auto m : {PortionMaterial::Lead, PortionMaterial::Galvanized, PortionMaterial::Copper,
                           PortionMaterial::Other}) {
                levels.insert(std::string(to_string(m)));
            }
        }
        b.levels.assign(levels.begin(), levels.end());
        for (const auto& l : b.levels) enc.names_.push_back(name + "=" + l);
        enc.blocks_.push_back(std::move(b));
    };
    if (options.include_precinct) add_block(Source::Precinct, 0, "precinct");
    if (options.include_record_label) add_block(Source::RecordLabel, 0, "record_label");
    if (options.include_private_inspection) add_block(Source::PrivateInspection, 0, "private_inspection");
    for (std::size_t j = 0; j < schema.categorical_names.size(); ++j) {
        add_block(Source::Extra, j, schema.categorical_names[j]);
    }
    return enc;
}

void FeatureEncoder::encode(const ParcelRecord& p, std::span<double> out) const {
    if (out.size() != width()) throw DataError("encoder output width mismatch");
    if (p.numeric.size() != n_numeric_) {
        throw DataError("parcel '" + p.parcel_id + "' numeric arity does not match the encoder");
    }
    std::size_t o = 0;
    for (double v : p.numeric) out[o++] = v;
    for (const auto& b : blocks_) {
        const std::string c = category_of(p, b);
        if (c.empty()) {
            for (std::size_t l = 0; l < b.levels.size(); ++l) out[o++] = kMissing;
            continue;
        }
        // Unseen levels encode as all zeros.
        for (const auto& level : b.levels) out[o++] = (level == c) ? 1.0 : 0.0;
    }
}

std::vector<double> FeatureEncoder::encode(const ParcelRecord& p) const {
    std::vector<double> out(width());
    encode(p, out);
    return out;
}

FeatureMatrix FeatureEncoder::encode_all(const CityDataset& ds) const {
    FeatureMatrix m(ds.size(), width(), names_);
    for (std::size_t i = 0; i < ds.size(); ++i) encode(ds.parcel(i), m.row(i));
    return m;
}

nlohmann::json FeatureEncoder::to_json() const {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : blocks_) {
        blocks.push_back({{"source", source_name(static_cast<int>(b.source))},
                          {"extra_index", b.extra_index},
                          {"levels", b.levels}});
    }
    return {{"n_numeric", n_numeric_}, {"names", names_}, {"blocks", blocks}};
}

FeatureEncoder FeatureEncoder::from_json(const nlohmann::json& j) {
    FeatureEncoder enc;
    try {
        enc.n_numeric_ = j.at("n_numeric").get<std::size_t>();
        enc.names_ = j.at("names").get<std::vector<std::string>>();
        for (const auto& b : j.at("blocks")) {
            Block block;
            const auto src = b.at("source").get<std::string>();
            if (src == "precinct") block.source = Source::Precinct;
            else if (src == "record_label") block.source = Source::RecordLabel;
            else if (src == "private_inspection") block.source = Source::PrivateInspection;
            else block.source = Source::Extra;
            block.extra_index = b.at("extra_index").get<std::size_t>();
            block.levels = b.at("levels").get<std::vector<std::string>>();
            enc.blocks_.push_back(std::move(block));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed encoder json: ") + e.what());
    }
    return enc;
}

}  // namespace remediate
