from typing import Annotated, Any, List, Tuple, Union

from pydantic import BaseModel, BeforeValidator, Field, model_validator

from fsilab.constants import ProfileName

class ProfileSpec(BaseModel):
    """Named analytic profile, or a constant when `name` is `constant`."""
    name: str = ProfileName.CONSTANT.value
    amplitude: float = 1.0
    value: Union[float, List[float]] = 0.0
    mode: Tuple[int, int] = (1, 1)

    @model_validator(mode='after')
    def check_profile_logic(self) -> 'ProfileSpec':
        if self.name != ProfileName.CONSTANT and self.value != 0.0:
            raise ValueError(f"Parameter 'value' is only used by constant profiles, not by '{self.name}'.")
        if any(k < 1 for k in self.mode):
            raise ValueError("Profile mode numbers must be positive.")
        return self

def coerce_profile(v: Any) -> Any:
    """A bare number or list becomes a constant profile, a bare string a named one."""
    if isinstance(v, (int, float, list)) and not isinstance(v, bool):
        return {"name": ProfileName.CONSTANT.value, "value": v}
    if isinstance(v, str):
        return {"name": v}
    return v

Profile = Annotated[ProfileSpec, BeforeValidator(coerce_profile)]

def zero_profile() -> ProfileSpec:
    return ProfileSpec(name=ProfileName.ZERO.value)

class PlateVectorSpec(BaseModel):
    """Three plate profiles for the in-plane components and the transversal one."""
    u1: Profile = Field(default_factory=zero_profile)
    u2: Profile = Field(default_factory=zero_profile)
    w: Profile = Field(default_factory=zero_profile)

    def ordered(self) -> Tuple[ProfileSpec, ProfileSpec, ProfileSpec]:
        return self.u1, self.u2, self.w

class PlateLoadSpec(BaseModel):
    g1: Profile = Field(default_factory=zero_profile)
    g2: Profile = Field(default_factory=zero_profile)
    g3: Profile = Field(default_factory=zero_profile)

    def ordered(self) -> Tuple[ProfileSpec, ProfileSpec, ProfileSpec]:
        return self.g1, self.g2, self.g3
