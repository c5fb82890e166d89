use super::{CompileError, VarId, WorldVariable};

/// Tolerance on categorical vectors summing to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// `[P(false), P(true)]` for a Bernoulli variable.
pub fn bernoulli(p: f64) -> Vec<f64> {
    vec![1.0 - p, p]
}

/// One probability vector per world variable, for a single cell.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAssignment {
    pub values: Vec<Vec<f64>>,
}

impl WeightAssignment {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        WeightAssignment { values }
    }
}

/// Per-cell weights for every world variable. Each variable's slice is laid
/// out cell-major: `slice[cell * arity + value]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    cells: usize,
    arities: Vec<usize>,
    channels: Vec<String>,
    slices: Vec<Vec<f64>>,
}

impl WeightGrid {
    /// Uniform weights: every value of every variable equally likely.
    pub fn uniform(variables: &[WorldVariable], cells: usize) -> Self {
        let slices = variables
            .iter()
            .map(|v| vec![1.0 / v.arity() as f64; cells * v.arity()])
            .collect();
        WeightGrid {
            cells,
            arities: variables.iter().map(WorldVariable::arity).collect(),
            channels: variables.iter().map(|v| v.channel.clone()).collect(),
            slices,
        }
    }

    /// The same assignment in every cell.
    pub fn broadcast(
        variables: &[WorldVariable],
        assignment: &WeightAssignment,
        cells: usize,
    ) -> Result<Self, CompileError> {
        if assignment.values.len() != variables.len() {
            return Err(CompileError::ShapeMismatch(format!(
                "{} variables, assignment has {}",
                variables.len(),
                assignment.values.len()
            )));
        }
        let mut grid = WeightGrid::uniform(variables, cells);
        for (var, vector) in assignment.values.iter().enumerate() {
            let slice: Vec<f64> = vector
                .iter()
                .copied()
                .cycle()
                .take(cells * vector.len())
                .collect();
            grid.set(var, slice)?;
        }
        Ok(grid)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn slice(&self, var: VarId) -> &[f64] {
        &self.slices[var]
    }

    #[inline]
    pub fn value(&self, var: VarId, cell: usize, value: usize) -> f64 {
        self.slices[var][cell * self.arities[var] + value]
    }

    /// Replaces one variable's slice after checking its length and that every
    /// cell holds a probability vector.
    pub fn set(&mut self, var: VarId, slice: Vec<f64>) -> Result<(), CompileError> {
        let arity = self.arities[var];
        if slice.len() != self.cells * arity {
            return Err(CompileError::ShapeMismatch(format!(
                "{} expects {} values ({} cells x arity {arity}), got {}",
                self.channels[var],
                self.cells * arity,
                self.cells,
                slice.len()
            )));
        }
        check_vectors(&self.channels[var], arity, &slice)?;
        self.slices[var] = slice;
        Ok(())
    }

    /// Overwrites selected cells of one variable. `values` holds one vector per
    /// listed cell.
    pub fn set_cells(
        &mut self,
        var: VarId,
        cells: &[usize],
        values: &[f64],
    ) -> Result<(), CompileError> {
        let arity = self.arities[var];
        if values.len() != cells.len() * arity {
            return Err(CompileError::ShapeMismatch(format!(
                "{} patch of {} cells needs {} values, got {}",
                self.channels[var],
                cells.len(),
                cells.len() * arity,
                values.len()
            )));
        }
        if let Some(&bad) = cells.iter().find(|&&c| c >= self.cells) {
            return Err(CompileError::ShapeMismatch(format!(
                "cell {bad} outside grid of {} cells",
                self.cells
            )));
        }
        check_vectors(&self.channels[var], arity, values)?;
        let slice = &mut self.slices[var];
        for (i, &cell) in cells.iter().enumerate() {
            slice[cell * arity..(cell + 1) * arity]
                .copy_from_slice(&values[i * arity..(i + 1) * arity]);
        }
        Ok(())
    }

    pub fn cell_assignment(&self, cell: usize) -> WeightAssignment {
        WeightAssignment::new(
            self.slices
                .iter()
                .zip(&self.arities)
                .map(|(s, &a)| s[cell * a..(cell + 1) * a].to_vec())
                .collect(),
        )
    }
}

pub(crate) fn check_vectors(
    channel: &str,
    arity: usize,
    values: &[f64],
) -> Result<(), CompileError> {
    for (cell, v) in values.chunks(arity).enumerate() {
        if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(CompileError::InvalidWeights {
                channel: channel.to_string(),
                cell,
                message: format!("value {bad} outside [0, 1]"),
            });
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(CompileError::InvalidWeights {
                channel: channel.to_string(),
                cell,
                message: format!("vector sums to {sum}"),
            });
        }
    }
    Ok(())
}
