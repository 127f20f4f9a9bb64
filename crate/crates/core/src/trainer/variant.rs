//! The seven pipeline variants compared in the ablation study.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    /// VAE latent of the camera image.
    Latent,
    /// Keypoints plus gripper positions.
    Keypoint,
    /// Raw pixels through the convolutional controller.
    Pixels,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dynamics {
    Trained,
    /// Constructed once and never updated; only its hidden state is used.
    Untrained,
    Absent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variant(u8);

impl Variant {
    pub const COUNT: u8 = 7;

    pub fn new(id: u8) -> Option<Self> {
        (1..=Self::COUNT).contains(&id).then_some(Self(id))
    }

    pub fn all() -> impl Iterator<Item = Variant> {
        (1..=Self::COUNT).map(Variant)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn representation(self) -> Representation {
        match self.0 {
            1 | 3 | 5 => Representation::Latent,
            2 | 4 | 6 => Representation::Keypoint,
            _ => Representation::Pixels,
        }
    }

    pub fn dynamics(self) -> Dynamics {
        match self.0 {
            1 | 2 => Dynamics::Trained,
            3 | 4 => Dynamics::Untrained,
            _ => Dynamics::Absent,
        }
    }

    pub fn uses_vae(self) -> bool {
        self.representation() == Representation::Latent
    }

    pub fn uses_mdn(self) -> bool {
        self.dynamics() != Dynamics::Absent
    }

    /// Whether the run alternates model fitting and controller generations
    /// over several system iterations with rollout collection. Otherwise the
    /// models (if any) are fitted once on random data and the controller runs
    /// a fixed number of generations.
    pub fn iterative(self) -> bool {
        self.uses_mdn()
    }

    /// Whether the camera image must be rendered during episodes.
    pub fn needs_pixels(self) -> bool {
        self.representation() != Representation::Keypoint
    }

    pub fn label(self) -> &'static str {
        match self.0 {
            1 => "rgb-vae-mdn",
            2 => "keypoint-mdn",
            3 => "rgb-vae-untrained-mdn",
            4 => "keypoint-untrained-mdn",
            5 => "rgb-vae",
            6 => "keypoint",
            _ => "rgb-conv",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
