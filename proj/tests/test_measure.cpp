// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "salign/core/errors.hpp"
#include "salign/measure/measure.hpp"

using namespace salign;
using namespace salign::measure;

TEST_CASE("cimt of a uniform band") {
    ImageGrid mask(20, 32, 0.0f);
    for (int x = 0; x < 20; ++x) {
        for (int y = 10; y < 20; ++y) mask.at(x, y) = 1.0f;  // 10 rows tall
    }
    CHECK(cimt_from_mask(mask, 0.15) == doctest::Approx(1.5));
    // linear in spacing
    CHECK(cimt_from_mask(mask, 0.30) == doctest::Approx(3.0));

    // a typical band at clinical spacing lands inside the observed range
    CHECK(cimt_from_mask(mask, 0.15) >= clinical_reference::cimt_min_mm);
    CHECK(cimt_from_mask(mask, 0.15) <= clinical_reference::cimt_max_mm);
}

TEST_CASE("cimt averages per-column extents") {
    ImageGrid mask(2, 32, 0.0f);
    for (int y = 10; y < 20; ++y) mask.at(0, y) = 1.0f;  // height 10
    for (int y = 8; y < 20; ++y) mask.at(1, y) = 1.0f;   // height 12
    CHECK(cimt_from_mask(mask, 0.15) == doctest::Approx(1.65));

    // interior holes do not change the column extent
    mask.at(1, 12) = 0.0f;
    CHECK(cimt_from_mask(mask, 0.15) == doctest::Approx(1.65));
}

TEST_CASE("cimt error cases") {
    ImageGrid empty(8, 8, 0.0f);
    CHECK_THROWS_AS(cimt_from_mask(empty, 0.15), MeasurementUnavailable);
    ImageGrid none;
    CHECK_THROWS_AS(cimt_from_mask(none, 0.15), MeasurementUnavailable);
    ImageGrid ok(4, 4, 1.0f);
    CHECK_THROWS_AS(cimt_from_mask(ok, 0.0), ArgumentError);
}

namespace {

ScanSeries two_segment_series(double angle_deg, int half_slices, double x_offset = 0.0,
                              double scale = 1.0) {
    ScanSeries series;
    series.slice_spacing_mm = scale;
    series.pixel_spacing_mm = scale;
    const double slope = std::tan(angle_deg * M_PI / 180.0);
    for (int i = 0; i <= 2 * half_slices; ++i) {
        const double z = static_cast<double>(i);
        const double x =
            (i <= half_slices ? slope * z : slope * half_slices - slope * (z - half_slices)) +
            x_offset;
        series.slices.push_back({{x, 5.0}, {x, 9.0}});
    }
    return series;
}

}  // namespace

TEST_CASE("curvature of a straight line is zero") {
    ScanSeries series;
    for (int i = 0; i < 12; ++i) series.slices.push_back({{7.5, 3.0}});
    CHECK(curvature_proxy_from_series(series) == doctest::Approx(0.0));

    // inclined straight line also has zero spread
    ScanSeries inclined;
    for (int i = 0; i < 12; ++i) inclined.slices.push_back({{7.5 + 0.3 * i, 3.0}});
    CHECK(curvature_proxy_from_series(inclined) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("two straight segments of +10 and -10 degrees give 20 degrees") {
    ScanSeries series = two_segment_series(10.0, 10);
    CHECK(curvature_proxy_from_series(series) == doctest::Approx(20.0).epsilon(0.025));
}

TEST_CASE("curvature invariances") {
    const double base = curvature_proxy_from_series(two_segment_series(10.0, 10));
    const double shifted = curvature_proxy_from_series(two_segment_series(10.0, 10, 42.0));
    CHECK(shifted == doctest::Approx(base).epsilon(1e-9));
    const double scaled = curvature_proxy_from_series(two_segment_series(10.0, 10, 0.0, 2.5));
    CHECK(scaled == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("curvature skips empty slices but keeps axial spacing") {
    ScanSeries series = two_segment_series(10.0, 10);
    series.slices[3].clear();
    series.slices[15].clear();
    CHECK(curvature_proxy_from_series(series) == doctest::Approx(20.0).epsilon(0.05));
}

TEST_CASE("curvature requires three usable slices") {
    ScanSeries series;
    series.slices = {{{1.0, 1.0}}, {}, {{2.0, 1.0}}};
    CHECK_THROWS_AS(curvature_proxy_from_series(series), MeasurementUnavailable);
    ScanSeries bad;
    bad.slices = {{{1.0, 1.0}}, {{1.0, 1.0}}, {{1.0, 1.0}}};
    bad.slice_spacing_mm = 0.0;
    CHECK_THROWS_AS(curvature_proxy_from_series(bad), ArgumentError);
}
