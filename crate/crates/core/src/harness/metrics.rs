use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{geodesic_angle, Trajectory};

/// Root-mean-square translation and geodesic rotation error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    pub e_trans: f64,
    pub e_rot: f64,
}

pub fn tracking_error(executed: &Trajectory, reference: &Trajectory) -> Result<TrackingError> {
    check_len("tracked trajectory", reference.len(), executed.len())?;
    if executed.is_empty() {
        return Err(Error::invalid("cannot score an empty trajectory"));
    }
    let n = executed.len() as f64;
    let (mut st, mut sr) = (0.0, 0.0);
    for (a, b) in executed.poses().iter().zip(reference.poses()) {
        st += (a.translation - b.translation).norm_squared();
        sr += geodesic_angle(&a.rotation, &b.rotation).powi(2);
    }
    Ok(TrackingError {
        e_trans: (st / n).sqrt(),
        e_rot: (sr / n).sqrt(),
    })
}

/// Plot data: one row per pose, `index,x,y,z,qw,qx,qy,qz`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("index,x,y,z,qw,qx,qy,qz\n");
    for (i, p) in traj.poses().iter().enumerate() {
        let t = p.translation;
        let [w, x, y, z] = p.rotation.wxyz();
        writeln!(out, "{i},{},{},{},{w},{x},{y},{z}", t.x, t.y, t.z).expect("writing to a String");
    }
    out
}
