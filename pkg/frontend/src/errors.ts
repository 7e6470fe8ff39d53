/** Input-contract violations raised by the CSV readers and plotters. */

export class SchemaMismatchError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaMismatchError";
  }
}

export class TooFewFeaturesError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TooFewFeaturesError";
  }
}

export class NonSquareInputError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NonSquareInputError";
  }
}
