//! Stringency-index ingestion (OxCGRT-style CSV), windowed averaging,
//! great-circle distances, and the distance/index correlation.

use crate::error::{Error, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::BadCoordinate { lat, lon });
        }
        Ok(GeoPoint { lat, lon })
    }
}

/// One region's (date, index) series; dates strictly increasing, values in
/// [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSeries {
    pub region: String,
    pub points: Vec<(NaiveDate, f64)>,
}

/// Parse result: valid series plus per-row diagnostics for everything that
/// was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseReport {
    pub series: Vec<IndexSeries>,
    pub rejected: Vec<String>,
}

/// Parses an OxCGRT-style CSV with columns RegionName, Date (YYYYMMDD), and
/// GovernmentResponseIndex. Malformed or out-of-range rows are collected into
/// the report; on duplicate dates the first row wins.
pub fn parse_oxcgrt<R: std::io::Read>(input: R) -> Result<ParseReport> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingCsvColumn(name.to_string()))
    };
    let region_col = col("RegionName")?;
    let date_col = col("Date")?;
    let index_col = col("GovernmentResponseIndex")?;

    let mut by_region: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut rejected = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let lineno = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(format!("line {lineno}: {e}"));
                continue;
            }
        };
        let region = record[region_col].trim().to_string();
        if region.is_empty() {
            rejected.push(format!("line {lineno}: empty RegionName"));
            continue;
        }
        let date = match NaiveDate::parse_from_str(record[date_col].trim(), "%Y%m%d") {
            Ok(d) => d,
            Err(_) => {
                rejected.push(format!(
                    "line {lineno}: bad Date {:?}",
                    &record[date_col]
                ));
                continue;
            }
        };
        let value: f64 = match record[index_col].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                rejected.push(format!(
                    "line {lineno}: bad GovernmentResponseIndex {:?}",
                    &record[index_col]
                ));
                continue;
            }
        };
        if !(0.0..=100.0).contains(&value) {
            rejected.push(format!("line {lineno}: index {value} outside [0, 100]"));
            continue;
        }
        let series = by_region.entry(region.clone()).or_default();
        if series.contains_key(&date) {
            rejected.push(format!(
                "line {lineno}: duplicate date {date} for {region}; first row kept"
            ));
            continue;
        }
        series.insert(date, value);
    }

    Ok(ParseReport {
        series: by_region
            .into_iter()
            .map(|(region, points)| IndexSeries {
                region,
                points: points.into_iter().collect(),
            })
            .collect(),
        rejected,
    })
}

/// Calendar-window mean of the index over available observations.
pub fn average_index(series: &IndexSeries, start: NaiveDate, end: NaiveDate) -> Result<f64> {
    if start > end {
        return Err(Error::EmptyDateRange { start, end });
    }
    let values: Vec<f64> = series
        .points
        .iter()
        .filter(|(d, _)| (start..=end).contains(d))
        .map(|&(_, v)| v)
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyDateRange { start, end });
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Great-circle distance on a spherical Earth of radius 6371 km.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    // Clamp: rounding can push h past 1 for antipodal points.
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::BadCorrelationInput);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityRecord {
    pub name: &'static str,
    pub lat: f64,
    pub lon: f64,
    pub province: &'static str,
    pub hubei: bool,
}

/// Reference coordinates for the sampled cities. Editable: the exact points
/// defining "distance from Wuhan" are a modeling choice.
pub fn builtin_cities() -> Vec<CityRecord> {
    let c = |name, lat, lon, province, hubei| CityRecord {
        name,
        lat,
        lon,
        province,
        hubei,
    };
    vec![
        c("Wuhan", 30.5928, 114.3055, "Hubei", true),
        c("Xiangyang", 32.0090, 112.1226, "Hubei", true),
        c("Yichang", 30.6919, 111.2865, "Hubei", true),
        c("Huangshi", 30.1996, 115.0381, "Hubei", true),
        c("Jingzhou", 30.3349, 112.2414, "Hubei", true),
        c("Chongqing", 29.5630, 106.5516, "Chongqing", false),
        c("Beijing", 39.9042, 116.4074, "Beijing", false),
        c("Shanghai", 31.2304, 121.4737, "Shanghai", false),
        c("Guangzhou", 23.1291, 113.2644, "Guangdong", false),
        c("Shenzhen", 22.5431, 114.0579, "Guangdong", false),
        c("Chengdu", 30.5728, 104.0668, "Sichuan", false),
        c("Xian", 34.3416, 108.9398, "Shaanxi", false),
        c("Hangzhou", 30.2741, 120.1551, "Zhejiang", false),
        c("Nanjing", 32.0603, 118.7969, "Jiangsu", false),
        c("Tianjin", 39.3434, 117.3616, "Tianjin", false),
        c("Changsha", 28.2282, 112.9388, "Hunan", false),
        c("Zhengzhou", 34.7466, 113.6254, "Henan", false),
        c("Jinan", 36.6512, 117.1201, "Shandong", false),
        c("Harbin", 45.8038, 126.5349, "Heilongjiang", false),
        c("Kunming", 25.0389, 102.7183, "Yunnan", false),
    ]
}

pub fn wuhan() -> GeoPoint {
    GeoPoint {
        lat: 30.5928,
        lon: 114.3055,
    }
}
