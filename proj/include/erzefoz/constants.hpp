#pragma once

namespace erzefoz::constants {

// Frequency-per-field units, MHz/mT.
constexpr double kMuBOverH = 13.9962449;
constexpr double kMuNOverH = 7.6225932e-3;

// SI.
constexpr double kMuB = 9.2740100783e-24;   // J/T
constexpr double kMuN = 5.0507837461e-27;   // J/T
constexpr double kMu0Over4Pi = 1e-7;        // T m / A
constexpr double kPi = 3.14159265358979323846;

constexpr double kAngstrom = 1e-10;

}  // namespace erzefoz::constants
