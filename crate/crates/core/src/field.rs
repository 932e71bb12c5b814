/// A point in the unit square.
pub type Point = [f64; 2];

/// Anything that can be evaluated pointwise on the domain.
pub trait ScalarField {
    fn eval(&self, p: Point) -> f64;
}

impl<F> ScalarField for F
where
    F: Fn(Point) -> f64,
{
    fn eval(&self, p: Point) -> f64 {
        self(p)
    }
}

/// Spatially constant field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn eval(&self, _: Point) -> f64 {
        self.0
    }
}
