use crate::error::ContainerError;

pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.f64(*v);
        }
    }

    pub fn bits(&mut self, bits: &[bool]) {
        for chunk in bits.chunks(8) {
            let mut b = 0u8;
            for (i, &on) in chunk.iter().enumerate() {
                if on {
                    b |= 1 << i;
                }
            }
            self.buf.push(b);
        }
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and positions after them.
    pub fn open(buf: &'a [u8], magic: &[u8; 8], version: u32) -> Result<Self, ContainerError> {
        if buf.len() < 8 {
            return Err(ContainerError::Corrupt("file shorter than magic".into()));
        }
        if &buf[..8] != magic {
            return Err(ContainerError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(&buf[..8]).into_owned(),
            });
        }
        let mut r = Self { buf, pos: 8 };
        let v = r.u32()?;
        if v != version {
            return Err(ContainerError::Version(v));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ContainerError::Corrupt(format!(
                "unexpected end of data at byte {} (need {n} more)",
                self.pos
            ))),
        }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize, ContainerError> {
        Ok(self.u32()? as usize)
    }

    pub fn f64(&mut self) -> Result<f64, ContainerError> {
        let offset = self.pos;
        let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(ContainerError::NonFinite(offset));
        }
        Ok(v)
    }

    /// `n` finite doubles. A payload too short for its header is a dimension
    /// error rather than corruption when it still ends on a whole value.
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ContainerError> {
        let need = n.checked_mul(8).ok_or_else(|| ContainerError::Dimension("size overflow".into()))?;
        if need > self.remaining() {
            if self.remaining() % 8 == 0 {
                return Err(ContainerError::Dimension(format!(
                    "header needs {n} values, payload holds {}",
                    self.remaining() / 8
                )));
            }
            return Err(ContainerError::Corrupt("truncated payload".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bits(&mut self, n: usize) -> Result<Vec<bool>, ContainerError> {
        let bytes = self.take(n.div_ceil(8))?;
        Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
    }

    pub fn finish(&self) -> Result<(), ContainerError> {
        if self.remaining() != 0 {
            return Err(ContainerError::Dimension(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}
