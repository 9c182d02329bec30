#pragma once

#include "otgeo/types.hpp"

namespace otgeo {

/// Pressure drag Cd = 2 / (v^2 A) * sum_i p_i (n_i . inlet) s_i. With no
/// surface measure given, s_i = total_area / n (total_area = 1 when <= 0).
double drag_coefficient(const Eigen::VectorXd& pressure, const Points& normals, const Eigen::VectorXd* measure,
                        double speed, double frontal_area, const Vec3& inlet, double total_area = 0.0);

/// (sum_i p_i (n_i . inlet) w_i - target)^2 with w_i = 1, or w_i = measure_i
/// when a measure is given.
double cd_loss(const Eigen::VectorXd& pressure, const Points& normals, const Vec3& inlet, double target,
               const Eigen::VectorXd* measure = nullptr);

/// d cd_loss / d pressure.
Eigen::VectorXd cd_loss_gradient(const Eigen::VectorXd& pressure, const Points& normals, const Vec3& inlet,
                                 double target, const Eigen::VectorXd* measure = nullptr);

/// sum_i p_i (n_i . inlet) w_i, the raw aggregate the loss compares against.
double drag_sum(const Eigen::VectorXd& pressure, const Points& normals, const Vec3& inlet,
                const Eigen::VectorXd* measure = nullptr);

}  // namespace otgeo
