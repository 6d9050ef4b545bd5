#include "fdnet/units.hpp"

#include <algorithm>
#include <cmath>

namespace fdnet {

int dbz_to_pixel(double dbz) {
    const double p = std::floor(255.0 * (dbz + 10.0) / 70.0 + 0.5);
    return static_cast<int>(std::clamp(p, 0.0, 255.0));
}

double pixel_to_dbz(double pixel) { return 70.0 * pixel / 255.0 - 10.0; }

double dbz_pixel_convert(double value, ConvertDirection direction) {
    return direction == ConvertDirection::kDbzToPixel ? static_cast<double>(dbz_to_pixel(value))
                                                      : pixel_to_dbz(value);
}

double normalized_to_dbz(double v) { return pixel_to_dbz(255.0 * v); }

double dbz_to_rainrate(double dbz, double a, double b) {
    return std::pow(std::pow(10.0, dbz / 10.0) / a, 1.0 / b);
}

}  // namespace fdnet
