use super::simple::check_len;
use crate::error::{Error, Result};
use crate::fx::{BlackboxFx, ParamSpecSet, ParamVector};

/// Effects applied in series; the parameter vector is the concatenation of
/// the members' vectors in chain order.
pub struct Chain {
    members: Vec<Box<dyn BlackboxFx>>,
    offsets: Vec<usize>,
    specs: ParamSpecSet,
    block_size: usize,
    member_params: Vec<ParamVector>,
    cache_key: Vec<f64>,
    scratch: Vec<f64>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Chain {
    /// `names` label each member; they prefix the member's parameter names.
    pub fn new(members: Vec<(String, Box<dyn BlackboxFx>)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("a chain needs at least one effect".into()));
        }
        let specs = ParamSpecSet::concat(members.iter().map(|(n, fx)| (n.as_str(), fx.param_specs())))?;
        let mut offsets = Vec::with_capacity(members.len());
        let mut total = 0;
        let mut block_size = 1;
        for (_, fx) in &members {
            offsets.push(total);
            total += fx.param_specs().len();
            let b = fx.block_size().max(1);
            block_size = block_size / gcd(block_size, b) * b;
        }
        let member_params = members
            .iter()
            .map(|(_, fx)| ParamVector::splat(fx.param_specs().len(), 0.0))
            .collect();
        Ok(Self {
            members: members.into_iter().map(|(_, fx)| fx).collect(),
            offsets,
            specs,
            block_size,
            member_params,
            cache_key: Vec::new(),
            scratch: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl BlackboxFx for Chain {
    fn param_specs(&self) -> &ParamSpecSet {
        &self.specs
    }

    fn block_size(&self) -> usize {
        self.block_size
    }

    fn latency(&self) -> usize {
        self.members.iter().map(|m| m.latency()).sum()
    }

    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        debug_assert!(check_len("chain", self.specs.len(), params.len()).is_ok());
        if self.cache_key.as_slice() != params.values() {
            for (mp, (&off, fx)) in self
                .member_params
                .iter_mut()
                .zip(self.offsets.iter().zip(&self.members))
            {
                *mp = params.slice(off, fx.param_specs().len());
            }
            self.cache_key.clear();
            self.cache_key.extend_from_slice(params.values());
        }
        output.copy_from_slice(input);
        self.scratch.resize(input.len(), 0.0);
        for (fx, mp) in self.members.iter_mut().zip(&self.member_params) {
            self.scratch.copy_from_slice(output);
            fx.process_block(&self.scratch, mp, output);
        }
    }

    fn reset(&mut self) {
        for fx in self.members.iter_mut() {
            fx.reset();
        }
    }
}
