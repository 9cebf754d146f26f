#include "remediate/data_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "remediate/csv.hpp"
#include "remediate/error.hpp"

namespace remediate {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string describe(PortionMaterial pub, PortionMaterial priv) {
    return std::string(to_string(pub)) + "/" + std::string(to_string(priv));
}

}  // namespace

PortionMaterial parse_material(std::string_view text) {
    const std::string t = lower(csv::trim(text));
    if (t == "lead") return PortionMaterial::Lead;
    if (t == "galvanized") return PortionMaterial::Galvanized;
    if (t == "copper") return PortionMaterial::Copper;
    if (t == "other") return PortionMaterial::Other;
    if (t == "unknown" || t.empty()) return PortionMaterial::Unknown;
    throw DataError("unrecognized material '" + std::string(text) + "'");
}

std::string_view to_string(PortionMaterial m) noexcept {
    switch (m) {
        case PortionMaterial::Lead: return "lead";
        case PortionMaterial::Galvanized: return "galvanized";
        case PortionMaterial::Copper: return "copper";
        case PortionMaterial::Other: return "other";
        case PortionMaterial::Unknown: return "unknown";
    }
    return "unknown";
}

char material_code(PortionMaterial m) noexcept {
    switch (m) {
        case PortionMaterial::Lead: return 'L';
        case PortionMaterial::Galvanized: return 'G';
        case PortionMaterial::Copper: return 'C';
        case PortionMaterial::Other: return 'O';
        case PortionMaterial::Unknown: return '?';
    }
    return '?';
}

ObservationSource parse_source(std::string_view text) {
    const std::string t = lower(csv::trim(text));
    if (t == "hydrovac") return ObservationSource::Hydrovac;
    if (t == "replacement") return ObservationSource::Replacement;
    if (t == "privateinspection" || t == "private_inspection") {
        return ObservationSource::PrivateInspection;
    }
    if (t == "pilot") return ObservationSource::Pilot;
    throw DataError("unrecognized observation source '" + std::string(text) + "'");
}

std::string_view to_string(ObservationSource s) noexcept {
    switch (s) {
        case ObservationSource::Hydrovac: return "hydrovac";
        case ObservationSource::Replacement: return "replacement";
        case ObservationSource::PrivateInspection: return "private_inspection";
        case ObservationSource::Pilot: return "pilot";
    }
    return "hydrovac";
}

HazardLabel derive_label(PortionMaterial public_material, PortionMaterial private_material) {
    if (public_material == PortionMaterial::Unknown ||
        private_material == PortionMaterial::Unknown) {
        throw DataError("cannot derive a label with an unknown portion material");
    }
    return HazardLabel{is_hazardous(public_material) || is_hazardous(private_material)};
}

FeatureSchema FeatureSchema::standard() {
    return FeatureSchema{{"year_built", "value", "lat", "lon"}, {}};
}

std::optional<std::size_t> FeatureSchema::numeric_index(std::string_view name) const {
    auto it = std::find(numeric_names.begin(), numeric_names.end(), name);
    if (it == numeric_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - numeric_names.begin());
}

std::optional<HazardLabel> ParcelRecord::label() const {
    if (!verified) return std::nullopt;
    return verified->label();
}

bool operator==(const ParcelRecord& a, const ParcelRecord& b) {
    if (a.parcel_id != b.parcel_id || a.precinct != b.precinct ||
        a.record_label != b.record_label || a.categorical != b.categorical ||
        a.private_inspection != b.private_inspection || a.verified != b.verified ||
        a.numeric.size() != b.numeric.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.numeric.size(); ++i) {
        const bool ma = is_missing(a.numeric[i]);
        const bool mb = is_missing(b.numeric[i]);
        if (ma != mb) return false;
        if (!ma && a.numeric[i] != b.numeric[i]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// CityDataset

CityDataset::CityDataset(FeatureSchema schema, std::vector<ParcelRecord> parcels)
    : schema_(std::move(schema)), parcels_(std::move(parcels)) {
    if (schema_.numeric_names.size() < 4) {
        throw DataError("feature schema must start with year_built, value, lat, lon");
    }
    for (const auto& p : parcels_) {
        if (p.parcel_id.empty()) throw DataError("empty parcel id");
        if (p.numeric.size() != schema_.numeric_names.size() ||
            p.categorical.size() != schema_.categorical_names.size()) {
            throw DataError("parcel '" + p.parcel_id + "' has a feature vector of the wrong length");
        }
        if (p.precinct.empty()) throw DataError("parcel '" + p.parcel_id + "' has no precinct");
    }
    std::sort(parcels_.begin(), parcels_.end(),
              [](const ParcelRecord& a, const ParcelRecord& b) { return a.parcel_id < b.parcel_id; });
    for (std::size_t i = 1; i < parcels_.size(); ++i) {
        if (parcels_[i].parcel_id == parcels_[i - 1].parcel_id) {
            throw DuplicateIdError(parcels_[i].parcel_id);
        }
    }
    rebuild_index();
}

void CityDataset::rebuild_index() {
    index_.clear();
    index_.reserve(parcels_.size());
    std::set<std::string> precincts;
    for (std::size_t i = 0; i < parcels_.size(); ++i) {
        index_.emplace(parcels_[i].parcel_id, i);
        precincts.insert(parcels_[i].precinct);
    }
    precincts_.assign(precincts.begin(), precincts.end());
}

std::optional<std::size_t> CityDataset::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t CityDataset::index_of(std::string_view id) const {
    auto i = find(id);
    if (!i) throw UnknownParcelError(std::string(id));
    return *i;
}

std::vector<std::string> CityDataset::unlabeled_ids() const {
    std::vector<std::string> out;
    for (const auto& p : parcels_)
        if (!p.labeled()) out.push_back(p.parcel_id);
    return out;
}

std::vector<std::string> CityDataset::labeled_ids() const {
    std::vector<std::string> out;
    for (const auto& p : parcels_)
        if (p.labeled()) out.push_back(p.parcel_id);
    return out;
}

std::size_t CityDataset::labeled_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(parcels_.begin(), parcels_.end(), [](const auto& p) { return p.labeled(); }));
}

CityDataset CityDataset::without_labels() const {
    CityDataset out = *this;
    out.observations_.clear();
    for (auto& p : out.parcels_) {
        p.verified.reset();
        p.private_inspection = PortionMaterial::Unknown;
    }
    return out;
}

CityDataset CityDataset::labeled_subset() const {
    std::vector<ParcelRecord> kept;
    for (const auto& p : parcels_)
        if (p.labeled()) kept.push_back(p);
    CityDataset out(schema_, std::move(kept));
    for (const auto& o : observations_)
        if (out.find(o.parcel_id)) out.observations_.push_back(o);
    return out;
}

bool operator==(const CityDataset& a, const CityDataset& b) {
    return a.schema_ == b.schema_ && a.parcels_ == b.parcels_ &&
           a.observations_ == b.observations_;
}

void CityDataset::apply_in_place(const ServiceLineObservation& obs) {
    const std::size_t i = index_of(obs.parcel_id);
    ParcelRecord& p = parcels_[i];
    if (obs.epoch < 0) throw DataError("observation for '" + obs.parcel_id + "' has a negative epoch");

    if (obs.source == ObservationSource::PrivateInspection) {
        if (obs.public_material != PortionMaterial::Unknown) {
            throw DataError("private inspection of '" + obs.parcel_id +
                            "' cannot report a public material");
        }
        if (obs.private_material == PortionMaterial::Unknown) return;
        PortionMaterial existing = p.private_inspection;
        if (existing == PortionMaterial::Unknown && p.verified) existing = p.verified->private_material;
        if (existing != PortionMaterial::Unknown && existing != obs.private_material) {
            throw ConflictError(obs.parcel_id, "private " + std::string(to_string(existing)),
                                "private " + std::string(to_string(obs.private_material)));
        }
        p.private_inspection = obs.private_material;
        observations_.push_back(obs);
        return;
    }

    // Throws on unknown portions.
    (void)derive_label(obs.public_material, obs.private_material);
    if (p.private_inspection != PortionMaterial::Unknown &&
        p.private_inspection != obs.private_material) {
        throw ConflictError(obs.parcel_id, "private " + std::string(to_string(p.private_inspection)),
                            describe(obs.public_material, obs.private_material));
    }
    VerifiedLine line{obs.public_material, obs.private_material, obs.source, obs.epoch};
    if (p.verified) {
        if (!p.verified->same_materials(line)) {
            throw ConflictError(obs.parcel_id,
                                describe(p.verified->public_material, p.verified->private_material),
                                describe(obs.public_material, obs.private_material));
        }
    } else {
        p.verified = line;
    }
    observations_.push_back(obs);
}

CityDataset apply_observations(CityDataset ds, std::span<const ServiceLineObservation> obs) {
    for (const auto& o : obs) ds.apply_in_place(o);
    return ds;
}

CityDataset apply_observation(CityDataset ds, const ServiceLineObservation& obs) {
    return apply_observations(std::move(ds), std::span(&obs, 1));
}

// ---------------------------------------------------------------------------
// Tabular I/O

CityDataset ingest_parcels(std::istream& in, const ColumnMap& columns) {
    std::vector<std::string> header;
    if (!csv::read_row(in, header)) throw DataError("parcel file is empty");
    for (auto& h : header) h = std::string(csv::trim(h));

    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("parcel file is missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_id = column(columns.parcel_id);
    const std::array<std::size_t, 4> c_num = {column(columns.year_built), column(columns.value),
                                              column(columns.lat), column(columns.lon)};
    const std::size_t c_precinct = column(columns.precinct);
    const std::size_t c_record = column(columns.record_label);

    std::vector<std::size_t> extras;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == c_id || c == c_precinct || c == c_record ||
            std::find(c_num.begin(), c_num.end(), c) != c_num.end()) {
            continue;
        }
        extras.push_back(c);
    }

    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
    std::vector<std::string> fields;
    std::size_t line = 1;
    while (csv::read_row(in, fields)) {
        ++line;
        if (fields.size() == 1 && csv::trim(fields[0]).empty()) continue;
        if (fields.size() != header.size()) throw ArityError(line, header.size(), fields.size());
        rows.push_back(fields);
        line_numbers.push_back(line);
    }

    // An extra column is numeric when every non-blank cell parses as a number.
    std::vector<bool> extra_numeric(extras.size(), true);
    for (std::size_t e = 0; e < extras.size(); ++e) {
        for (const auto& r : rows) {
            auto cell = csv::trim(r[extras[e]]);
            if (!cell.empty() && !csv::parse_double(cell)) {
                extra_numeric[e] = false;
                break;
            }
        }
    }

    FeatureSchema schema = FeatureSchema::standard();
    for (std::size_t e = 0; e < extras.size(); ++e) {
        (extra_numeric[e] ? schema.numeric_names : schema.categorical_names)
            .push_back(header[extras[e]]);
    }

    std::vector<ParcelRecord> parcels;
    parcels.reserve(rows.size());
    std::set<std::string> seen;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        ParcelRecord p;
        p.parcel_id = std::string(csv::trim(row[c_id]));
        if (p.parcel_id.empty()) {
            throw DataError("line " + std::to_string(line_numbers[r]) + ": empty parcel id");
        }
        if (!seen.insert(p.parcel_id).second) throw DuplicateIdError(p.parcel_id);
        for (std::size_t c : c_num) {
            auto cell = csv::trim(row[c]);
            if (cell.empty()) {
                p.numeric.push_back(kMissing);
                continue;
            }
            auto v = csv::parse_double(cell);
            if (!v) {
                throw DataError("line " + std::to_string(line_numbers[r]) + ": column '" +
                                header[c] + "' is not numeric");
            }
            p.numeric.push_back(*v);
        }
        for (std::size_t e = 0; e < extras.size(); ++e) {
            if (!extra_numeric[e]) continue;
            auto v = csv::parse_double(row[extras[e]]);
            p.numeric.push_back(v ? *v : kMissing);
        }
        for (std::size_t e = 0; e < extras.size(); ++e) {
            if (extra_numeric[e]) continue;
            p.categorical.emplace_back(csv::trim(row[extras[e]]));
        }
        p.precinct = std::string(csv::trim(row[c_precinct]));
        if (p.precinct.empty()) {
            throw DataError("line " + std::to_string(line_numbers[r]) + ": empty precinct");
        }
        p.record_label = std::string(csv::trim(row[c_record]));
        parcels.push_back(std::move(p));
    }
    return CityDataset(std::move(schema), std::move(parcels));
}

void write_parcels(std::ostream& out, const CityDataset& ds) {
    const auto& schema = ds.schema();
    std::vector<std::string> header = {"parcel_id", "year_built", "value", "lat", "lon",
                                       "precinct", "record_label"};
    for (std::size_t i = 4; i < schema.numeric_names.size(); ++i) header.push_back(schema.numeric_names[i]);
    for (const auto& n : schema.categorical_names) header.push_back(n);
    csv::write_row(out, header);

    std::vector<std::string> row;
    auto num = [](double v) { return is_missing(v) ? std::string() : csv::format_double(v); };
    for (const auto& p : ds.parcels()) {
        row.clear();
        row.push_back(p.parcel_id);
        for (std::size_t i = 0; i < 4; ++i) row.push_back(num(p.numeric[i]));
        row.push_back(p.precinct);
        row.push_back(p.record_label);
        for (std::size_t i = 4; i < p.numeric.size(); ++i) row.push_back(num(p.numeric[i]));
        for (const auto& c : p.categorical) row.push_back(c);
        csv::write_row(out, row);
    }
}

std::vector<ServiceLineObservation> ingest_observations(std::istream& in) {
    std::vector<std::string> header;
    if (!csv::read_row(in, header)) throw DataError("observation file is empty");
    for (auto& h : header) h = std::string(csv::trim(h));
    auto column = [&](const char* name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw DataError(std::string("observation file is missing column '") + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_id = column("parcel_id");
    const std::size_t c_pub = column("public_material");
    const std::size_t c_priv = column("private_material");
    const std::size_t c_src = column("source");
    const std::size_t c_epoch = column("epoch");

    std::vector<ServiceLineObservation> out;
    std::vector<std::string> fields;
    std::size_t line = 1;
    while (csv::read_row(in, fields)) {
        ++line;
        if (fields.size() == 1 && csv::trim(fields[0]).empty()) continue;
        if (fields.size() != header.size()) throw ArityError(line, header.size(), fields.size());
        ServiceLineObservation o;
        o.parcel_id = std::string(csv::trim(fields[c_id]));
        if (o.parcel_id.empty()) throw DataError("line " + std::to_string(line) + ": empty parcel id");
        try {
            o.public_material = parse_material(fields[c_pub]);
            o.private_material = parse_material(fields[c_priv]);
            o.source = parse_source(fields[c_src]);
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line) + ": " + e.what());
        }
        auto epoch = csv::parse_double(fields[c_epoch]);
        if (!epoch || *epoch < 0 || *epoch != std::floor(*epoch)) {
            throw DataError("line " + std::to_string(line) + ": epoch must be a non-negative integer");
        }
        o.epoch = static_cast<int>(*epoch);
        out.push_back(std::move(o));
    }
    return out;
}

void write_observations(std::ostream& out, std::span<const ServiceLineObservation> obs) {
    csv::write_row(out, {"parcel_id", "public_material", "private_material", "source", "epoch"});
    for (const auto& o : obs) {
        csv::write_row(out, {o.parcel_id, std::string(to_string(o.public_material)),
                             std::string(to_string(o.private_material)),
                             std::string(to_string(o.source)), std::to_string(o.epoch)});
    }
}

// ---------------------------------------------------------------------------
// Synthetic cities

void SyntheticCityConfig::validate() const {
    if (n_parcels < 1) throw ConfigError("n_parcels must be at least 1");
    if (!(prevalence > 0.0 && prevalence < 1.0)) {
        throw ConfigError("prevalence must lie strictly inside (0, 1)");
    }
    if (n_precincts < 1) throw ConfigError("n_precincts must be at least 1");
    if (!(precinct_effect_scale >= 0.0)) throw ConfigError("precinct_effect_scale must be >= 0");
    if (!(record_noise >= 0.0 && record_noise <= 1.0)) throw ConfigError("record_noise must lie in [0, 1]");
    if (!(record_missing_rate >= 0.0 && record_missing_rate <= 1.0)) {
        throw ConfigError("record_missing_rate must lie in [0, 1]");
    }
    if (n_periods < 1) throw ConfigError("n_periods must be at least 1");
    for (double s : {signal.year, signal.value, signal.location}) {
        if (!std::isfinite(s)) throw ConfigError("signal coefficients must be finite");
    }
}

VerifiedLine materials_for_label(HazardLabel label, Rng& rng) {
    using M = PortionMaterial;
    VerifiedLine line;
    if (label.hazardous) {
        const double u = rng.uniform();
        line.public_material = u < 0.55 ? M::Lead : (u < 0.70 ? M::Galvanized : M::Copper);
        const double v = rng.uniform();
        if (is_hazardous(line.public_material)) {
            line.private_material = v < 0.45 ? M::Galvanized : (v < 0.90 ? M::Copper : M::Lead);
        } else {
            line.private_material = v < 0.80 ? M::Galvanized : M::Lead;
        }
        line.source = ObservationSource::Replacement;
    } else {
        line.public_material = rng.uniform() < 0.93 ? M::Copper : M::Other;
        line.private_material = rng.uniform() < 0.95 ? M::Copper : M::Other;
        line.source = ObservationSource::Hydrovac;
    }
    return line;
}

std::size_t SyntheticCity::hazardous_count() const {
    return static_cast<std::size_t>(std::count_if(
        truth.begin(), truth.end(), [](const VerifiedLine& l) { return l.label().hazardous; }));
}

std::vector<ServiceLineObservation> SyntheticCity::truth_observations() const {
    std::vector<ServiceLineObservation> out;
    out.reserve(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto& t = truth[i];
        out.push_back({dataset.parcel(i).parcel_id, t.public_material, t.private_material, t.source,
                       t.epoch});
    }
    return out;
}

CityDataset SyntheticCity::revealed() const {
    const auto obs = truth_observations();
    return apply_observations(dataset, obs);
}

SyntheticCity generate_synthetic_city(const SyntheticCityConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    constexpr double lat_lo = 42.97, lat_hi = 43.08;
    constexpr double lon_lo = -83.78, lon_hi = -83.62;
    constexpr double value_log_mean = 11.0;  // ~ $60k
    constexpr double value_log_sd = 0.6;
    const double lat_c = 0.5 * (lat_lo + lat_hi);
    const double lon_c = 0.5 * (lon_lo + lon_hi);
    const double half_diag = 0.5 * std::hypot(lat_hi - lat_lo, lon_hi - lon_lo);

    const std::size_t grid_cols =
        static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cfg.n_precincts))));
    const std::size_t grid_rows = (cfg.n_precincts + grid_cols - 1) / grid_cols;

    std::vector<double> precinct_effect(cfg.n_precincts);
    for (auto& e : precinct_effect) e = rng.normal(0.0, cfg.precinct_effect_scale);

    auto precinct_name = [](std::size_t p) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "PCT-%03zu", p + 1);
        return std::string(buf);
    };

    std::vector<ParcelRecord> parcels(cfg.n_parcels);
    std::vector<double> score(cfg.n_parcels);
    for (std::size_t i = 0; i < cfg.n_parcels; ++i) {
        ParcelRecord& p = parcels[i];
        char id[32];
        std::snprintf(id, sizeof id, "P%07zu", i + 1);
        p.parcel_id = id;

        const double year = 1900.0 + static_cast<double>(rng.below(106));
        const double log_value = rng.normal(value_log_mean, value_log_sd);
        const double value = std::round(std::exp(log_value));
        const double lat = rng.uniform(lat_lo, lat_hi);
        const double lon = rng.uniform(lon_lo, lon_hi);
        p.numeric = {year, value, lat, lon};

        const auto row = std::min<std::size_t>(
            grid_rows - 1, static_cast<std::size_t>((lat - lat_lo) / (lat_hi - lat_lo) * grid_rows));
        const auto col = std::min<std::size_t>(
            grid_cols - 1, static_cast<std::size_t>((lon - lon_lo) / (lon_hi - lon_lo) * grid_cols));
        const std::size_t precinct = (row * grid_cols + col) % cfg.n_precincts;
        p.precinct = precinct_name(precinct);

        const double f_year = 2.0 * sigmoid((1945.0 - year) / 6.0) - 1.0;
        const double f_value = -(std::log(value) - value_log_mean) / value_log_sd;
        const double d = std::hypot(lat - lat_c, lon - lon_c) / half_diag;
        const double f_loc = 2.0 * std::exp(-(d * d) / (0.35 * 0.35)) - 1.0;
        score[i] = cfg.signal.year * f_year + cfg.signal.value * f_value +
                   cfg.signal.location * f_loc + precinct_effect[precinct];
    }

    // Intercept chosen so the expected prevalence over this city equals the target.
    auto mean_prob = [&](double a) {
        double s = 0.0;
        for (double z : score) s += sigmoid(a + z);
        return s / static_cast<double>(score.size());
    };
    double lo = -60.0, hi = 60.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_prob(mid) < cfg.prevalence ? lo : hi) = mid;
    }
    const double intercept = 0.5 * (lo + hi);

    SyntheticCity city;
    city.truth.resize(cfg.n_parcels);
    city.hazard_probability.resize(cfg.n_parcels);
    for (std::size_t i = 0; i < cfg.n_parcels; ++i) {
        const double prob = sigmoid(intercept + score[i]);
        city.hazard_probability[i] = prob;
        const HazardLabel label{rng.bernoulli(prob)};
        VerifiedLine line = materials_for_label(label, rng);
        line.epoch = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n_periods)));
        city.truth[i] = line;

        ParcelRecord& p = parcels[i];
        if (rng.bernoulli(cfg.record_missing_rate)) {
            p.record_label = "Unknown";
        } else {
            const bool agrees = !rng.bernoulli(cfg.record_noise);
            const bool says_hazard = agrees == label.hazardous;
            if (!says_hazard) {
                p.record_label = "Copper";
            } else {
                p.record_label = line.public_material == PortionMaterial::Galvanized ? "Galvanized" : "Lead";
            }
        }
    }
    // Ids are generated in sorted order, so truth stays aligned after sorting.
    city.dataset = CityDataset(FeatureSchema::standard(), std::move(parcels));
    return city;
}

// ---------------------------------------------------------------------------
// Nearest-neighbor label propagation

std::vector<PropagatedLabel> knn_propagate_labels(const CityDataset& labeled,
                                                  std::span<const ParcelRecord> unlabeled,
                                                  std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ConfigError("k must be positive");
    std::vector<const ParcelRecord*> pool;
    for (const auto& p : labeled.parcels())
        if (p.labeled()) pool.push_back(&p);
    if (k > pool.size()) {
        throw ConfigError("k = " + std::to_string(k) + " exceeds the labeled pool of " +
                          std::to_string(pool.size()));
    }
    const std::size_t n_num = labeled.schema().numeric_names.size();
    const std::size_t n_cat = labeled.schema().categorical_names.size();
    for (const auto& u : unlabeled) {
        if (u.numeric.size() != n_num || u.categorical.size() != n_cat) {
            throw DataError("parcel '" + u.parcel_id + "' does not match the labeled schema");
        }
    }

    // z-score statistics over every parcel involved.
    std::vector<double> mean(n_num, 0.0), sd(n_num, 0.0);
    {
        std::vector<double> count(n_num, 0.0), sum2(n_num, 0.0);
        auto accumulate = [&](const ParcelRecord& p) {
            for (std::size_t j = 0; j < n_num; ++j) {
                if (is_missing(p.numeric[j])) continue;
                count[j] += 1.0;
                mean[j] += p.numeric[j];
                sum2[j] += p.numeric[j] * p.numeric[j];
            }
        };
        for (auto* p : pool) accumulate(*p);
        for (const auto& u : unlabeled) accumulate(u);
        for (std::size_t j = 0; j < n_num; ++j) {
            if (count[j] == 0.0) {
                sd[j] = 1.0;
                continue;
            }
            mean[j] /= count[j];
            const double var = std::max(0.0, sum2[j] / count[j] - mean[j] * mean[j]);
            sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    }
    auto standardize = [&](const ParcelRecord& p) {
        std::vector<double> z(n_num);
        for (std::size_t j = 0; j < n_num; ++j) {
            z[j] = is_missing(p.numeric[j]) ? 0.0 : (p.numeric[j] - mean[j]) / sd[j];
        }
        return z;
    };
    std::vector<std::vector<double>> pool_z;
    pool_z.reserve(pool.size());
    for (auto* p : pool) pool_z.push_back(standardize(*p));

    // Differing one-hot blocks contribute 1 + 1 to the squared distance.
    auto categorical_distance = [&](const ParcelRecord& a, const ParcelRecord& b) {
        double d = 0.0;
        if (a.precinct != b.precinct) d += 2.0;
        if (a.record_label != b.record_label) d += 2.0;
        for (std::size_t j = 0; j < n_cat; ++j)
            if (a.categorical[j] != b.categorical[j]) d += 2.0;
        return d;
    };

    // Pool is in ascending id order (dataset order), so index order breaks ties.
    std::vector<std::size_t> order(unlabeled.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return unlabeled[a].parcel_id < unlabeled[b].parcel_id;
    });

    Rng rng(seed);
    std::vector<PropagatedLabel> out;
    out.reserve(unlabeled.size());
    std::vector<std::pair<double, std::size_t>> dist(pool.size());
    for (std::size_t oi : order) {
        const ParcelRecord& u = unlabeled[oi];
        const auto z = standardize(u);
        for (std::size_t j = 0; j < pool.size(); ++j) {
            double d = categorical_distance(u, *pool[j]);
            const auto& pz = pool_z[j];
            for (std::size_t c = 0; c < n_num; ++c) {
                const double diff = z[c] - pz[c];
                d += diff * diff;
            }
            dist[j] = {d, j};
        }
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        // nth_element leaves the k smallest (by distance, then index) in front.
        std::size_t hazardous = 0;
        for (std::size_t j = 0; j < k; ++j)
            if (pool[dist[j].second]->verified->label().hazardous) ++hazardous;
        const double prob = static_cast<double>(hazardous) / static_cast<double>(k);
        out.push_back({u.parcel_id, prob, HazardLabel{rng.bernoulli(prob)}});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Records vs verified materials

std::size_t Crosstab::count(std::string_view row, std::string_view column) const {
    auto r = std::find(rows.begin(), rows.end(), row);
    auto c = std::find(columns.begin(), columns.end(), column);
    if (r == rows.end() || c == columns.end()) return 0;
    return counts[static_cast<std::size_t>(r - rows.begin())][static_cast<std::size_t>(c - columns.begin())];
}

std::size_t Crosstab::row_total(std::size_t r) const {
    return std::accumulate(counts.at(r).begin(), counts.at(r).end(), std::size_t{0});
}

std::size_t Crosstab::column_total(std::size_t c) const {
    std::size_t s = 0;
    for (const auto& row : counts) s += row.at(c);
    return s;
}

std::size_t Crosstab::total() const {
    std::size_t s = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) s += row_total(r);
    return s;
}

Crosstab records_crosstab(const CityDataset& ds) {
    std::map<std::string, std::map<std::string, std::size_t>> cells;
    std::set<std::string> columns;
    for (const auto& p : ds.parcels()) {
        if (!p.verified || p.record_label.empty()) continue;
        const std::string col = std::string(1, material_code(p.verified->public_material)) + "-" +
                                std::string(1, material_code(p.verified->private_material));
        ++cells[p.record_label][col];
        columns.insert(col);
    }
    Crosstab t;
    t.columns.assign(columns.begin(), columns.end());
    for (const auto& [row, counts] : cells) {
        t.rows.push_back(row);
        std::vector<std::size_t> line;
        for (const auto& c : t.columns) {
            auto it = counts.find(c);
            line.push_back(it == counts.end() ? 0 : it->second);
        }
        t.counts.push_back(std::move(line));
    }
    return t;
}

}  // namespace remediate
