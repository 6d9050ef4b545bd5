#pragma once

// Radar intensity conversions between the reflectivity domain (dBZ), 8-bit
// pixel values and the normalized [0,1] range used for training.

namespace fdnet {

enum class ConvertDirection { kDbzToPixel, kPixelToDbz };

/// pixel = floor(255 * (dBZ + 10) / 70 + 0.5), clipped to [0, 255].
int dbz_to_pixel(double dbz);
/// dBZ = 70 * pixel / 255 - 10 (continuous inverse).
double pixel_to_dbz(double pixel);
double dbz_pixel_convert(double value, ConvertDirection direction);

/// Normalized value v = pixel / 255, so dBZ = 70 * v - 10.
double normalized_to_dbz(double v);

/// Z-R relation Z = a * R^b with Z = 10^(dBZ/10); returns rain rate in mm/h.
/// Defaults are the coefficients used for the HKO radar archive.
double dbz_to_rainrate(double dbz, double a = 58.53, double b = 1.56);

}  // namespace fdnet
