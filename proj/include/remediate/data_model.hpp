#pragma once

// Parcels, service line observations, labels and city datasets.
//
// A CityDataset is a value: operations that add information return a new
// dataset. Parcels are kept sorted by parcel id, so index order and id order
// agree everywhere downstream (tie-breaking relies on this).

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "remediate/rng.hpp"

namespace remediate {

enum class PortionMaterial { Lead, Galvanized, Copper, Other, Unknown };

constexpr bool is_hazardous(PortionMaterial m) noexcept {
    return m == PortionMaterial::Lead || m == PortionMaterial::Galvanized;
}

// Case-insensitive; throws DataError on anything outside the five names.
PortionMaterial parse_material(std::string_view text);
std::string_view to_string(PortionMaterial m) noexcept;
// Single-letter code used in cross-tabulation columns (L, G, C, O, ?).
char material_code(PortionMaterial m) noexcept;

enum class ObservationSource { Hydrovac, Replacement, PrivateInspection, Pilot };

ObservationSource parse_source(std::string_view text);
std::string_view to_string(ObservationSource s) noexcept;

struct HazardLabel {
    bool hazardous = false;

    int y() const noexcept { return hazardous ? 1 : 0; }
    friend bool operator==(const HazardLabel&, const HazardLabel&) = default;
};

// y = 1 iff either portion is lead or galvanized. Both portions must be known.
HazardLabel derive_label(PortionMaterial public_material, PortionMaterial private_material);

struct ServiceLineObservation {
    std::string parcel_id;
    PortionMaterial public_material = PortionMaterial::Unknown;
    PortionMaterial private_material = PortionMaterial::Unknown;
    ObservationSource source = ObservationSource::Hydrovac;
    int epoch = 0;

    friend bool operator==(const ServiceLineObservation&, const ServiceLineObservation&) = default;
};

// Both portions verified for one home.
struct VerifiedLine {
    PortionMaterial public_material = PortionMaterial::Unknown;
    PortionMaterial private_material = PortionMaterial::Unknown;
    ObservationSource source = ObservationSource::Hydrovac;
    int epoch = 0;

    HazardLabel label() const { return derive_label(public_material, private_material); }
    bool same_materials(const VerifiedLine& o) const noexcept {
        return public_material == o.public_material && private_material == o.private_material;
    }
    friend bool operator==(const VerifiedLine&, const VerifiedLine&) = default;
};

// Explicit marker for a missing numeric feature.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) noexcept { return std::isnan(v); }

struct FeatureSchema {
    // Always starts with year_built, value, lat, lon; extra numeric columns follow.
    std::vector<std::string> numeric_names;
    // Extra categorical columns only (precinct and record_label are dedicated fields).
    std::vector<std::string> categorical_names;

    static FeatureSchema standard();
    std::optional<std::size_t> numeric_index(std::string_view name) const;

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

struct ParcelRecord {
    std::string parcel_id;
    std::vector<double> numeric;  // schema order; kMissing where blank
    std::string precinct;
    std::string record_label;              // raw city record text, "" when blank
    std::vector<std::string> categorical;  // schema order; "" where blank
    PortionMaterial private_inspection = PortionMaterial::Unknown;
    std::optional<VerifiedLine> verified;

    bool labeled() const noexcept { return verified.has_value(); }
    std::optional<HazardLabel> label() const;

    // Missing numerics compare equal to each other.
    friend bool operator==(const ParcelRecord& a, const ParcelRecord& b);
};

// Column names for the required parcel fields.
struct ColumnMap {
    std::string parcel_id = "parcel_id";
    std::string year_built = "year_built";
    std::string value = "value";
    std::string lat = "lat";
    std::string lon = "lon";
    std::string precinct = "precinct";
    std::string record_label = "record_label";
};

class CityDataset {
public:
    CityDataset() = default;
    // Sorts parcels by id; throws DuplicateIdError / DataError on invalid input.
    CityDataset(FeatureSchema schema, std::vector<ParcelRecord> parcels);

    const FeatureSchema& schema() const noexcept { return schema_; }
    std::span<const ParcelRecord> parcels() const noexcept { return parcels_; }
    const ParcelRecord& parcel(std::size_t i) const { return parcels_.at(i); }
    std::size_t size() const noexcept { return parcels_.size(); }

    std::optional<std::size_t> find(std::string_view id) const;
    // Throws UnknownParcelError.
    std::size_t index_of(std::string_view id) const;

    // Sorted distinct precinct ids.
    const std::vector<std::string>& precincts() const noexcept { return precincts_; }
    const std::vector<ServiceLineObservation>& observations() const noexcept {
        return observations_;
    }

    std::vector<std::string> unlabeled_ids() const;  // U
    std::vector<std::string> labeled_ids() const;    // L
    std::size_t labeled_count() const noexcept;

    // Copy with every label and private inspection removed (features kept).
    CityDataset without_labels() const;
    // Copy restricted to labeled parcels.
    CityDataset labeled_subset() const;

    friend bool operator==(const CityDataset& a, const CityDataset& b);

private:
    friend CityDataset apply_observations(CityDataset ds,
                                          std::span<const ServiceLineObservation> obs);
    void apply_in_place(const ServiceLineObservation& obs);
    void rebuild_index();

    FeatureSchema schema_;
    std::vector<ParcelRecord> parcels_;
    std::vector<ServiceLineObservation> observations_;
    std::vector<std::string> precincts_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Returns a new dataset with the observation applied. Hydrovac, replacement and
// pilot findings label the parcel; private inspections only record the private
// material as a feature. Throws UnknownParcelError or ConflictError.
CityDataset apply_observation(CityDataset ds, const ServiceLineObservation& obs);
CityDataset apply_observations(CityDataset ds, std::span<const ServiceLineObservation> obs);

CityDataset ingest_parcels(std::istream& in, const ColumnMap& columns = {});
void write_parcels(std::ostream& out, const CityDataset& ds);

std::vector<ServiceLineObservation> ingest_observations(std::istream& in);
void write_observations(std::ostream& out, std::span<const ServiceLineObservation> obs);

struct SignalCoefficients {
    double year = 2.0;      // pre-war construction
    double value = 1.0;     // lower assessed value
    double location = 1.5;  // proximity to the old city core
};

struct SyntheticCityConfig {
    std::size_t n_parcels = 6506;
    double prevalence = 0.75;
    std::size_t n_precincts = 36;
    double precinct_effect_scale = 0.5;
    SignalCoefficients signal;
    double record_noise = 0.35;
    double record_missing_rate = 0.0;
    int n_periods = 20;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

struct SyntheticCity {
    CityDataset dataset;                     // features only, every parcel in U
    std::vector<VerifiedLine> truth;         // aligned with dataset parcels
    std::vector<double> hazard_probability;  // generating probability per parcel

    std::size_t hazardous_count() const;
    std::vector<ServiceLineObservation> truth_observations() const;
    CityDataset revealed() const;  // dataset with every truth applied
};

SyntheticCity generate_synthetic_city(const SyntheticCityConfig& cfg);

// Draws public/private materials consistent with a label.
VerifiedLine materials_for_label(HazardLabel label, Rng& rng);

struct PropagatedLabel {
    std::string parcel_id;
    double probability = 0.0;  // fraction of k nearest labeled neighbors with y = 1
    HazardLabel label;
};

// Labels each unlabeled parcel by a Bernoulli draw from the hazard fraction of
// its k nearest labeled neighbors. Distance: Euclidean on z-scored numerics
// (missing -> mean) plus one-hot categoricals; ties at rank k go to the lower id.
std::vector<PropagatedLabel> knn_propagate_labels(const CityDataset& labeled,
                                                  std::span<const ParcelRecord> unlabeled,
                                                  std::size_t k, std::uint64_t seed);

struct Crosstab {
    std::vector<std::string> rows;     // raw record labels
    std::vector<std::string> columns;  // verified "public-private" codes, e.g. "L-C"
    std::vector<std::vector<std::size_t>> counts;

    std::size_t count(std::string_view row, std::string_view column) const;
    std::size_t row_total(std::size_t r) const;
    std::size_t column_total(std::size_t c) const;
    std::size_t total() const;
};

// Record label x verified material pair, over verified parcels with a non-blank record.
Crosstab records_crosstab(const CityDataset& ds);

}  // namespace remediate
