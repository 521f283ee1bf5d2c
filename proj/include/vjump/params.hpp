#pragma once

#include <cmath>

namespace vjump
{

/// Velocity-jump model parameters.
struct ModelParams
{
    double lambda = 1.0;   ///< turn rate (events per unit time)
    double kappa = 0.0;    ///< von Mises concentration of turning angles
    double sigma = 1.0;    ///< Rayleigh speed scale
    double rho = 0.0;      ///< correlation of successive speeds, in [0, 1)
    double varsigma = 0.0; ///< observation error standard deviation

    bool in_support() const
    {
        return lambda > 0.0 && kappa >= 0.0 && sigma > 0.0 && rho >= 0.0 && rho < 1.0 && varsigma >= 0.0 &&
               std::isfinite(lambda) && std::isfinite(kappa) && std::isfinite(sigma) && std::isfinite(varsigma);
    }
};

} // namespace vjump
