//! Register bookkeeping for multi-register qudit systems over `Z_q`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub width: usize,
    offset: usize,
}

/// Ordered list of named registers, each a vector of `width` qudits of
/// dimension `q`. Basis labels are flat digit strings in register order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    q: i64,
    registers: Vec<Register>,
    total_digits: usize,
}

impl RegisterLayout {
    pub fn new(q: i64, regs: &[(&str, usize)]) -> Result<Self> {
        if q < 2 {
            return Err(Error::BadParams(format!("qudit dimension {q} < 2")));
        }
        let mut registers = Vec::with_capacity(regs.len());
        let mut offset = 0;
        for (name, width) in regs {
            if *width == 0 {
                return Err(Error::BadParams(format!("register {name} has width 0")));
            }
            if registers.iter().any(|r: &Register| r.name == *name) {
                return Err(Error::BadParams(format!("duplicate register name {name}")));
            }
            registers.push(Register {
                name: name.to_string(),
                width: *width,
                offset,
            });
            offset += width;
        }
        Ok(RegisterLayout {
            q,
            registers,
            total_digits: offset,
        })
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    pub fn num_registers(&self) -> usize {
        self.registers.len()
    }

    pub fn total_digits(&self) -> usize {
        self.total_digits
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::NoSuchRegister(name.to_string()))
    }

    pub fn width(&self, reg: usize) -> usize {
        self.registers[reg].width
    }

    pub fn name(&self, reg: usize) -> &str {
        &self.registers[reg].name
    }

    /// Range of digit positions belonging to register `reg`.
    pub fn digit_range(&self, reg: usize) -> std::ops::Range<usize> {
        let r = &self.registers[reg];
        r.offset..r.offset + r.width
    }

    /// Layout with one more register appended.
    pub fn with_register(&self, name: &str, width: usize) -> Result<Self> {
        let mut regs: Vec<(&str, usize)> = self
            .registers
            .iter()
            .map(|r| (r.name.as_str(), r.width))
            .collect();
        regs.push((name, width));
        RegisterLayout::new(self.q, &regs)
    }

    /// Layout with register `reg` removed.
    pub fn without_register(&self, reg: usize) -> Result<Self> {
        let regs: Vec<(&str, usize)> = self
            .registers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != reg)
            .map(|(_, r)| (r.name.as_str(), r.width))
            .collect();
        RegisterLayout::new(self.q, &regs)
    }

    /// Check that a flat digit string is valid for this layout.
    pub fn validate_label(&self, label: &[u16]) -> Result<()> {
        if label.len() != self.total_digits {
            return Err(Error::LayoutMismatch(format!(
                "label has {} digits, layout needs {}",
                label.len(),
                self.total_digits
            )));
        }
        if label.iter().any(|&d| (d as i64) >= self.q) {
            return Err(Error::LayoutMismatch("digit out of range".into()));
        }
        Ok(())
    }
}
