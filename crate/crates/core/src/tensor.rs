//! Minimal dense tensor used by the network engine.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Shape of a value flowing through a network: a flat vector or an
/// `h x w x c` grid (row-major, channel innermost).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Flat(usize),
    Grid { h: usize, w: usize, c: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Grid { h, w, c } => h * w * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn describe(&self) -> String {
        match *self {
            Shape::Flat(n) => format!("flat({n})"),
            Shape::Grid { h, w, c } => format!("grid({h}x{w}x{c})"),
        }
    }
}

/// A value with its shape. Data is stored row-major with the channel index
/// innermost: `data[(y * w + x) * c + ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            data: vec![0.0; shape.len()],
            shape,
        }
    }

    pub fn flat(data: Vec<f64>) -> Self {
        Self {
            shape: Shape::Flat(data.len()),
            data,
        }
    }

    /// Build a grid tensor, checking the element count.
    pub fn grid(h: usize, w: usize, c: usize, data: Vec<f64>) -> Option<Self> {
        if data.len() != h * w * c {
            return None;
        }
        Some(Self {
            shape: Shape::Grid { h, w, c },
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Grid accessor; callers guarantee the shape is a grid.
    #[inline]
    pub fn at(&self, y: usize, x: usize, ch: usize) -> f64 {
        let (w, c) = match self.shape {
            Shape::Grid { w, c, .. } => (w, c),
            Shape::Flat(_) => panic!("at() on a flat tensor"),
        };
        self.data[(y * w + x) * c + ch]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
